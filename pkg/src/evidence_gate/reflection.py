"""Rule-based reflection: failure signal in, patch and policy recommendation out.

A rulebook is a JSON document::

    {
      "rules": [
        {"failure": "MetricMissing", "task_id": "T06", "action": "SimplifyContract",
         "confidence": 0.85, "decision": "RETRY", "risk_score": 0.2,
         "target_phase": "Phase4_5", "edits": {"drop_metrics": ["epoch_time"]}},
        ...
      ],
      "default": {"action": "NoOp", "confidence": 0.0, "decision": "ESCALATE", "risk_score": 0.9}
    }

A rule with ``task_id`` beats a rule without one for the same failure. A
rule with ``target_phase`` only fires while reflecting in that retry phase,
which lets one failure class get different repairs before and after
execution. The ``default`` rule catches everything else.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Tuple

from .contract import AcceptanceContract
from .verification import FailureClass, RoutingTarget, route


class PatchAction(str, enum.Enum):
    SIMPLIFY_CONTRACT = "SimplifyContract"
    CONCRETIZE_RUN_ID = "ConcretizeRunId"
    RELOG_EVIDENCE = "RelogEvidence"
    REPAIR_RUNTIME = "RepairRuntime"
    NO_OP = "NoOp"


class Decision(str, enum.Enum):
    RETRY = "RETRY"
    ESCALATE = "ESCALATE"
    ABORT = "ABORT"


@dataclass(frozen=True)
class Patch:
    patch_id: str
    target_phase: RoutingTarget
    action: PatchAction
    confidence: float
    provenance: str
    edits: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"patch confidence {self.confidence} outside [0, 1]")
        if not self.provenance:
            raise ValueError("patch provenance must be non-empty")


@dataclass(frozen=True)
class PolicyRecommendation:
    decision: Decision
    risk_score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.risk_score <= 1.0:
            raise ValueError(f"risk score {self.risk_score} outside [0, 1]")


@dataclass(frozen=True)
class Rule:
    action: PatchAction
    confidence: float
    decision: Decision
    risk_score: float
    target_phase: RoutingTarget | None = None
    edits: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Rule:
        target = data.get("target_phase")
        return cls(
            action=PatchAction(data["action"]),
            confidence=float(data["confidence"]),
            decision=Decision(data.get("decision", "RETRY")),
            risk_score=float(data.get("risk_score", 0.5)),
            target_phase=RoutingTarget(target) if target else None,
            edits=dict(data.get("edits", {})),
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "action": self.action.value,
            "confidence": self.confidence,
            "decision": self.decision.value,
            "risk_score": self.risk_score,
        }
        if self.target_phase is not None:
            out["target_phase"] = self.target_phase.value
        if self.edits:
            out["edits"] = dict(self.edits)
        return out


RuleKey = Tuple[FailureClass, Optional[str], Optional[RoutingTarget]]


class Rulebook:
    """Rules keyed by (failure, task id or None, retry phase or None)."""

    def __init__(self, rules: Mapping[RuleKey, Rule], default: Rule):
        self.rules = dict(rules)
        self.default = default

    def lookup(self, failure: FailureClass, task_id: str, phase: RoutingTarget | None = None) -> tuple[str, Rule]:
        """Most specific rule for ``failure`` while reflecting in ``phase``.

        Task-specific rules beat generic ones; within each, a rule scoped to
        the phase beats an unscoped one. ``phase`` defaults to the phase the
        failure routes to.
        """
        phase = phase or route(failure)
        for task in (task_id, None):
            for scope in (phase, None):
                rule = self.rules.get((failure, task, scope))
                if rule is not None:
                    label = failure.value + (f"@{task}" if task else "") + (f"/{scope.value}" if scope else "")
                    return label, rule
        return "default", self.default

    def with_rules(self, extra: Mapping[RuleKey, Rule]) -> Rulebook:
        return Rulebook({**self.rules, **extra}, self.default)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Rulebook:
        rules = {}
        for raw in data.get("rules", []):
            rule = Rule.from_dict(raw)
            rules[(FailureClass(raw["failure"]), raw.get("task_id"), rule.target_phase)] = rule
        return cls(rules, Rule.from_dict(data["default"]))

    def to_dict(self) -> dict[str, Any]:
        rules = []
        ordered = sorted(self.rules.items(), key=lambda kv: (kv[0][0].value, kv[0][1] or "", kv[0][2] or ""))
        for (failure, task_id, _), rule in ordered:
            entry = {"failure": failure.value}
            if task_id:
                entry["task_id"] = task_id
            entry.update(rule.to_dict())
            rules.append(entry)
        return {"rules": rules, "default": self.default.to_dict()}

    @classmethod
    def load(cls, path: str | Path) -> Rulebook:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_rulebook() -> Rulebook:
    return Rulebook.from_dict({
        "rules": [
            # a run id the approval gate cannot accept is deferred to execution start
            {"failure": "RunNotQueryable", "action": "ConcretizeRunId", "confidence": 0.8, "risk_score": 0.3,
             "target_phase": "Phase4_5"},
            {"failure": "RunNotQueryable", "action": "RelogEvidence", "confidence": 0.75, "risk_score": 0.3},
            {"failure": "ArtifactMissing", "action": "RelogEvidence", "confidence": 0.8, "risk_score": 0.25},
            {"failure": "ArtifactListingFailed", "action": "RelogEvidence", "confidence": 0.7, "risk_score": 0.4},
            {"failure": "NotFinished", "action": "RepairRuntime", "confidence": 0.75, "risk_score": 0.35},
            {"failure": "MetricMissing", "action": "SimplifyContract", "confidence": 0.75, "risk_score": 0.3},
            {"failure": "MetricOutOfRange", "action": "SimplifyContract", "confidence": 0.7, "risk_score": 0.4},
            {"failure": "ScopeIssue", "action": "NoOp", "confidence": 0.5, "risk_score": 0.6},
            {"failure": "TrackerUnreachable", "action": "NoOp", "confidence": 1.0, "decision": "ABORT",
             "risk_score": 1.0, "target_phase": "Halt"},
        ],
        "default": {"action": "NoOp", "confidence": 0.0, "decision": "ESCALATE", "risk_score": 0.9},
    })


def generate_patch(
    failure: FailureClass,
    task_id: str,
    rulebook: Rulebook,
    phase: RoutingTarget | None = None,
) -> tuple[Patch, PolicyRecommendation]:
    """Look up the rule for ``failure`` and turn it into a patch plus a policy call."""
    failure = FailureClass(failure)
    rule_key, rule = rulebook.lookup(failure, task_id, phase)
    target = rule.target_phase or phase or route(failure)
    patch = Patch(
        patch_id=f"{task_id}:{failure.value}:{rule.action.value}",
        target_phase=target,
        action=rule.action,
        confidence=rule.confidence,
        provenance=f"rulebook:{rule_key}",
        edits=rule.edits,
    )
    return patch, PolicyRecommendation(rule.decision, rule.risk_score)


def should_apply(patch: Patch, tau: float) -> bool:
    return patch.confidence >= tau


def apply_contract_patch(contract: AcceptanceContract, patch: Patch, subject: str | None = None) -> AcceptanceContract:
    """Apply the contract-level part of a patch.

    ``SimplifyContract`` drops the metrics listed in ``edits["drop_metrics"]``,
    or the failing metric ``subject`` when no list is given, from both the
    declared and the required metrics. ``ConcretizeRunId`` swaps the run id for
    a slot filled at execution start. Other actions leave the contract alone.
    """
    if patch.action is PatchAction.SIMPLIFY_CONTRACT:
        drop = set(patch.edits.get("drop_metrics") or ([subject] if subject else []))
        if not drop:
            return contract
        metrics = {k: v for k, v in contract.metrics.items() if k not in drop}
        required = contract.required_metrics
        if required is not None:
            required = {k: v for k, v in required.items() if k not in drop}
        return replace(contract, metrics=metrics, required_metrics=required)
    if patch.action is PatchAction.CONCRETIZE_RUN_ID:
        return replace(contract, run_id=None, run_id_deferred=True)
    return contract


@dataclass
class PatchRecord:
    task_id: str
    attempt: int
    phase: str
    failure: FailureClass
    patch: Patch
    recommendation: PolicyRecommendation
    applied: bool
    outcome: str = "pending"

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "attempt": self.attempt,
            "phase": self.phase,
            "failure": self.failure.value,
            "patch_id": self.patch.patch_id,
            "action": self.patch.action.value,
            "target_phase": self.patch.target_phase.value,
            "confidence": self.patch.confidence,
            "provenance": self.patch.provenance,
            "edits": dict(self.patch.edits),
            "applied": self.applied,
            "decision": self.recommendation.decision.value,
            "risk_score": self.recommendation.risk_score,
            "outcome": self.outcome,
        }


class PatchLedger:
    """Collects patch records for a run of the pipeline and writes them out.

    Files: ``<dir>/patches/<task_id>-<attempt>.json`` and
    ``<dir>/risk_scores.json`` (task id -> latest risk score).
    """

    def __init__(self) -> None:
        self.records: list[PatchRecord] = []

    def add(self, record: PatchRecord) -> PatchRecord:
        self.records.append(record)
        return record

    def for_task(self, task_id: str) -> list[PatchRecord]:
        return [r for r in self.records if r.task_id == task_id]

    def risk_scores(self) -> dict[str, float]:
        scores: dict[str, float] = {}
        for record in self.records:
            scores[record.task_id] = record.recommendation.risk_score
        return dict(sorted(scores.items()))

    def write(self, directory: str | Path) -> None:
        directory = Path(directory)
        patch_dir = directory / "patches"
        patch_dir.mkdir(parents=True, exist_ok=True)
        for record in self.records:
            path = patch_dir / f"{record.task_id}-{record.attempt}.json"
            path.write_text(json.dumps(record.to_dict(), indent=2) + "\n", encoding="utf-8")
        (directory / "risk_scores.json").write_text(json.dumps(self.risk_scores(), indent=2) + "\n", encoding="utf-8")
