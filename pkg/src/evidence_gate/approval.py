"""Pre-execution approval: static contract checks plus a three-reviewer panel."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .contract import AcceptanceContract, SchemaViolation, check_schema


class ReviewerId(str, enum.Enum):
    OPS_COMMANDER = "OpsCommander"
    QUALITY_SAFETY_MONITOR = "QualitySafetyMonitor"
    INFRASTRUCTURE_REVIEWER = "InfrastructureReviewer"


PANEL = tuple(ReviewerId)


class Outcome(str, enum.Enum):
    APPROVED = "Approved"
    REJECTED = "Rejected"
    HARD_VETO = "HardVeto"


class WrongPanelSize(ValueError):
    """The panel is not exactly one verdict per reviewer."""


@dataclass(frozen=True)
class ReviewerVerdict:
    reviewer_id: ReviewerId
    approves: bool
    confidence: float
    rationale: str = ""
    # Failure class name the reviewer is worried about; lets the retry phase
    # pick a matching patch. Free-form string to keep this module standalone.
    concern: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "reviewer_id", ReviewerId(self.reviewer_id))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if not self.approves and not self.rationale.strip():
            raise ValueError("a rejecting verdict needs a rationale")


@dataclass(frozen=True)
class GateConfig:
    tau: float = 0.7
    hard_veto_threshold: float = 0.5
    run_id_format_check: bool = False

    def __post_init__(self) -> None:
        for name in ("tau", "hard_veto_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if not self.hard_veto_threshold < self.tau:
            raise ValueError("hard_veto_threshold must be below tau")


@dataclass(frozen=True)
class ApprovalDecision:
    outcome: Outcome
    violations: tuple[SchemaViolation, ...] = ()
    failing_reviewers: tuple[ReviewerId, ...] = ()
    verdicts: tuple[ReviewerVerdict, ...] = field(default=(), compare=False)

    @property
    def approved(self) -> bool:
        return self.outcome is Outcome.APPROVED

    def to_dict(self) -> dict[str, Any]:
        return {
            "outcome": self.outcome.value,
            "violations": [v.to_dict() for v in self.violations],
            "failing_reviewers": [r.value for r in self.failing_reviewers],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ApprovalDecision:
        return cls(
            Outcome(data["outcome"]),
            tuple(SchemaViolation.from_dict(v) for v in data.get("violations", [])),
            tuple(ReviewerId(r) for r in data.get("failing_reviewers", [])),
        )


def evaluate_consensus(verdicts: Sequence[ReviewerVerdict], config: GateConfig) -> ApprovalDecision:
    """Approved only when all three reviewers approve at confidence >= tau.

    An objection whose confidence is below ``hard_veto_threshold`` turns the
    outcome into a hard veto. A low-confidence approval is just a failed vote.
    """
    if len(verdicts) != len(PANEL) or {v.reviewer_id for v in verdicts} != set(PANEL):
        raise WrongPanelSize(f"expected one verdict from each of {[r.value for r in PANEL]}")
    ordered = sorted(verdicts, key=lambda v: PANEL.index(v.reviewer_id))

    failing = tuple(v.reviewer_id for v in ordered if not v.approves or v.confidence < config.tau)
    vetoed = any(not v.approves and v.confidence < config.hard_veto_threshold for v in ordered)
    if vetoed:
        outcome = Outcome.HARD_VETO
    elif failing:
        outcome = Outcome.REJECTED
    else:
        outcome = Outcome.APPROVED
    return ApprovalDecision(outcome, (), failing, tuple(ordered))


def approve(
    contract: AcceptanceContract,
    verdicts: Sequence[ReviewerVerdict],
    config: GateConfig = GateConfig(),
) -> ApprovalDecision:
    """Static checks first; the panel is only consulted for a clean contract."""
    violations = check_schema(contract, run_id_format=config.run_id_format_check)
    if violations:
        return ApprovalDecision(Outcome.REJECTED, tuple(violations), (), tuple(verdicts))
    return evaluate_consensus(verdicts, config)
