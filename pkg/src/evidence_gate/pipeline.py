"""Phase 3 to 7 state machine with retry sub-phases and ledger emission.

One call to :func:`run_task` drives a single task from planning to a terminal
ledger entry. The variant decides which gates run; the retry phases (4.5, 5.5,
6.5) each get their own budget, and every patch the reflection rules propose
is recorded whether or not its confidence clears the threshold.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Callable, Mapping, Protocol, Sequence

from .approval import ApprovalDecision, GateConfig, ReviewerVerdict, approve
from .contract import AcceptanceContract, ValueType
from .ledger import ClaimsLedgerEntry, Evidence, LedgerStatus, utc_timestamp
from .reflection import (
    Decision,
    PatchLedger,
    PatchRecord,
    PolicyRecommendation,
    Rulebook,
    apply_contract_patch,
    default_rulebook,
    generate_patch,
    should_apply,
)
from .store import StoreError, StoreUnreachable, TrackingStore
from .verification import FailureClass, RoutingTarget, VerificationOutcome, route, verify


class EvidenceLogging(str, enum.Enum):
    OPTIONAL = "Optional"
    REQUIRED = "Required"


class MisconfiguredVariant(ValueError):
    pass


class StoreUnreachableAtStart(RuntimeError):
    pass


@dataclass(frozen=True)
class SystemVariant:
    name: str
    approval_gate_enabled: bool
    verification_gate_enabled: bool
    retries_enabled: bool
    evidence_logging: EvidenceLogging

    def validate(self) -> None:
        if self.approval_gate_enabled and not self.verification_gate_enabled:
            raise MisconfiguredVariant(f"{self.name}: an approval gate without verification binds nothing")
        if self.verification_gate_enabled and self.evidence_logging is not EvidenceLogging.REQUIRED:
            raise MisconfiguredVariant(f"{self.name}: verification needs evidence logging Required")
        if self.retries_enabled and not self.verification_gate_enabled:
            raise MisconfiguredVariant(f"{self.name}: retries need a gate to trigger them")


BASELINE_A = SystemVariant("A", False, False, False, EvidenceLogging.OPTIONAL)
BASELINE_B = SystemVariant("B", False, True, True, EvidenceLogging.REQUIRED)
EVIBOUND = SystemVariant("evibound", True, True, True, EvidenceLogging.REQUIRED)
VARIANTS = {v.name: v for v in (BASELINE_A, BASELINE_B, EVIBOUND)}


def variant_by_name(name: str) -> SystemVariant:
    for key, variant in VARIANTS.items():
        if key.lower() == name.lower():
            return variant
    raise MisconfiguredVariant(f"unknown variant {name!r}; expected one of {sorted(VARIANTS)}")


@dataclass(frozen=True)
class PipelineConfig:
    gate: GateConfig = field(default_factory=GateConfig)
    patch_tau: float = 0.7
    max_retries_per_phase: int = 2
    max_replans: int = 1
    verify_run_id_format: bool = False

    def __post_init__(self) -> None:
        if self.max_retries_per_phase < 0 or self.max_replans < 0:
            raise ValueError("retry limits must be non-negative")
        if not 0.0 <= self.patch_tau <= 1.0:
            raise ValueError(f"patch_tau={self.patch_tau} outside [0, 1]")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> PipelineConfig:
        gate_defaults = GateConfig()
        tau = float(data.get("tau", gate_defaults.tau))
        gate = GateConfig(
            tau=tau,
            hard_veto_threshold=float(data.get("hard_veto_threshold", gate_defaults.hard_veto_threshold)),
            run_id_format_check=bool(data.get("run_id_format_check", False)),
        )
        return cls(
            gate=gate,
            patch_tau=float(data.get("patch_tau", tau)),
            max_retries_per_phase=int(data.get("max_retries_per_phase", 2)),
            verify_run_id_format=bool(data.get("run_id_format_check", False)),
        )


class Phase(str, enum.Enum):
    P3 = "P3"
    P4 = "P4"
    P4_5 = "P4_5"
    P5 = "P5"
    P5_5 = "P5_5"
    P6 = "P6"
    P6_5 = "P6_5"
    P7 = "P7"
    TERMINAL = "Terminal"


RETRY_PHASES = (Phase.P4_5, Phase.P5_5, Phase.P6_5)

TRANSITIONS: dict[Phase, frozenset[Phase]] = {
    # P3->P5 and P5->P7 only occur when a variant disables the matching gate
    Phase.P3: frozenset({Phase.P4, Phase.P5}),
    Phase.P4: frozenset({Phase.P5, Phase.P4_5, Phase.TERMINAL}),
    Phase.P4_5: frozenset({Phase.P4, Phase.TERMINAL}),
    Phase.P5: frozenset({Phase.P6, Phase.P5_5, Phase.P7, Phase.TERMINAL}),
    Phase.P5_5: frozenset({Phase.P5, Phase.TERMINAL}),
    Phase.P6: frozenset({Phase.P7, Phase.P6_5, Phase.P5_5, Phase.P4_5, Phase.P3, Phase.TERMINAL}),
    Phase.P6_5: frozenset({Phase.P6, Phase.TERMINAL}),
    Phase.P7: frozenset({Phase.TERMINAL}),
    Phase.TERMINAL: frozenset(),
}

_TARGET_PHASE = {
    RoutingTarget.PHASE_3: Phase.P3,
    RoutingTarget.PHASE_4_5: Phase.P4_5,
    RoutingTarget.PHASE_5_5: Phase.P5_5,
    RoutingTarget.PHASE_6_5: Phase.P6_5,
}


_PHASE_TARGET = {phase: target for target, phase in _TARGET_PHASE.items()}


class IllegalPhaseTransition(RuntimeError):
    pass


class BudgetExhausted(RuntimeError):
    pass


@dataclass
class RetryBudget:
    max_per_phase: int = 2
    used: dict[Phase, int] = field(default_factory=lambda: {p: 0 for p in RETRY_PHASES})

    def remaining(self, phase: Phase) -> int:
        return self.max_per_phase - self.used[phase]

    def consume(self, phase: Phase) -> int:
        if self.remaining(phase) <= 0:
            raise BudgetExhausted(f"{phase.value} budget of {self.max_per_phase} spent")
        self.used[phase] += 1
        return self.used[phase]


@dataclass
class PhaseState:
    budget: RetryBudget
    current: Phase = Phase.P3
    trail: list[Phase] = field(default_factory=lambda: [Phase.P3])

    def advance(self, to: Phase) -> None:
        if to not in TRANSITIONS[self.current]:
            raise IllegalPhaseTransition(f"{self.current.value} -> {to.value}")
        self.current = to
        self.trail.append(to)


@dataclass(frozen=True)
class Claim:
    """What an executor reports back: the run it says holds the evidence."""

    run_id: str
    metrics: Mapping[str, float] = field(default_factory=dict)
    scope_issue: bool = False


class ExecutionFailure(RuntimeError):
    """The executor could not complete the task (crash, timeout, OOM)."""


class TaskExecutor(Protocol):
    def execute(self, contract: AcceptanceContract, store: TrackingStore) -> Claim: ...

    def recover(self, contract: AcceptanceContract, store: TrackingStore, claim: Claim) -> Claim: ...


Panel = Callable[[AcceptanceContract], Sequence[ReviewerVerdict]]
Clock = Callable[[], datetime]


def system_clock() -> datetime:
    return datetime.now(timezone.utc)


def approval_failure(decision: ApprovalDecision) -> tuple[FailureClass, str, str | None]:
    """Map a rejection to the failure class the reflection rules are keyed on."""
    # run id problems first: they decide whether any evidence can be bound at all
    by_priority = (
        ("acceptance_criteria.run_id", FailureClass.RUN_NOT_QUERYABLE),
        ("acceptance_criteria.artifacts", FailureClass.ARTIFACT_MISSING),
        ("acceptance_criteria.metrics", FailureClass.METRIC_MISSING),
        ("acceptance_criteria.required_metrics", FailureClass.METRIC_MISSING),
    )
    for prefix, failure in by_priority:
        for violation in decision.violations:
            if violation.field_path.startswith(prefix):
                return failure, str(violation), None
    if decision.violations:
        return FailureClass.SCOPE_ISSUE, str(decision.violations[0]), None
    failing = set(decision.failing_reviewers)
    for verdict in decision.verdicts:
        if verdict.reviewer_id in failing and verdict.concern:
            try:
                return FailureClass(verdict.concern), f"{verdict.reviewer_id.value}: {verdict.rationale}", None
            except ValueError:
                continue
    names = ", ".join(r.value for r in decision.failing_reviewers)
    return FailureClass.SCOPE_ISSUE, f"{decision.outcome.value} by {names}", None


def observed_metrics(contract: AcceptanceContract, store: TrackingStore, run_id: str) -> dict[str, float]:
    logged = store.get_run(run_id).metrics
    out: dict[str, float] = {}
    for name, spec in contract.metrics.items():
        if name not in logged:
            continue
        value = logged[name]
        if spec.value_type is ValueType.INT and float(value).is_integer():
            value = int(value)
        out[name] = value
    return out


class _TaskRun:
    """Mutable state for one pass through the pipeline."""

    def __init__(self, contract, executor, reviewers, variant, store, config, rulebook, clock, patch_ledger):
        self.contract: AcceptanceContract = contract
        self.executor = executor
        self.reviewers: Panel = reviewers
        self.variant: SystemVariant = variant
        self.store: TrackingStore = store
        self.config: PipelineConfig = config
        self.rulebook: Rulebook = rulebook
        self.clock: Clock = clock
        self.patches: PatchLedger = patch_ledger
        self.state = PhaseState(RetryBudget(config.max_retries_per_phase))
        self.history: list[tuple[str, str]] = []
        self.approval: ApprovalDecision | None = None
        self.claim: Claim | None = None
        self.pending: tuple[FailureClass, str, str | None] | None = None
        self.open_record: PatchRecord | None = None
        self.replans = 0
        self.deferred = False
        self.attempts = 0
        self.entry: ClaimsLedgerEntry | None = None

    # -- helpers -----------------------------------------------------------

    def close_record(self, outcome: str) -> None:
        if self.open_record is not None:
            self.open_record.outcome = outcome
            self.open_record = None

    def finish(self, status: LedgerStatus, failure: tuple[str, str] | None = None, *, evidence: Evidence | None = None) -> None:
        self.close_record(f"terminal:{status.value}")
        run_id = self.claim.run_id if self.claim is not None else None
        if status is LedgerStatus.BLOCKED_AT_APPROVAL:
            run_id = None
        if evidence is None and self.claim is not None and status is not LedgerStatus.BLOCKED_AT_APPROVAL:
            evidence = Evidence(
                self.store.run_url(self.claim.run_id),
                dict(self.claim.metrics),
                tuple(self.contract.artifacts),
            )
        self.entry = ClaimsLedgerEntry(
            task_id=self.contract.task_id,
            status=status,
            verification_timestamp=utc_timestamp(self.clock()),
            run_id=run_id,
            evidence=evidence,
            retry_history=tuple(self.history),
            approval=self.approval,
            failure=failure,
        )
        self.state.advance(Phase.TERMINAL)

    def go_retry(self, phase: Phase, failure: FailureClass, detail: str, subject: str | None) -> bool:
        """Enter a retry phase if the variant and budget allow it."""
        if not self.variant.retries_enabled or self.state.budget.remaining(phase) <= 0:
            return False
        if phase is Phase.P4_5 and not self.variant.approval_gate_enabled:
            # contract repair re-enters the approval gate, which this variant lacks
            return False
        self.pending = (failure, detail, subject)
        self.state.advance(phase)
        return True

    def reflect(self, phase: Phase) -> tuple[PatchRecord, PolicyRecommendation]:
        assert self.pending is not None
        failure, _, _ = self.pending
        attempt = self.state.budget.consume(phase)
        self.attempts += 1
        patch, rec = generate_patch(failure, self.contract.task_id, self.rulebook, _PHASE_TARGET[phase])
        record = self.patches.add(PatchRecord(
            task_id=self.contract.task_id,
            attempt=self.attempts,
            phase=phase.value,
            failure=failure,
            patch=patch,
            recommendation=rec,
            applied=should_apply(patch, self.config.patch_tau) and rec.decision is Decision.RETRY,
        ))
        self.history.append((phase.value, patch.patch_id))
        self.open_record = record
        return record, rec

    def policy_stop(self, rec: PolicyRecommendation) -> bool:
        if rec.decision is Decision.RETRY:
            return False
        assert self.pending is not None
        failure, detail, _ = self.pending
        status = LedgerStatus.HALTED if rec.decision is Decision.ABORT else LedgerStatus.ESCALATED
        self.finish(status, (failure.value, detail))
        return True

    # -- phases ------------------------------------------------------------

    def p3(self) -> None:
        self.state.advance(Phase.P4 if self.variant.approval_gate_enabled else Phase.P5)

    def p4(self) -> None:
        decision = approve(self.contract, self.reviewers(self.contract), self.config.gate)
        self.approval = decision
        if decision.approved:
            self.close_record("passed")
            self.state.advance(Phase.P5)
            return
        self.close_record("failed")
        failure, detail, subject = approval_failure(decision)
        if not self.go_retry(Phase.P4_5, failure, detail, subject):
            self.finish(LedgerStatus.BLOCKED_AT_APPROVAL, (failure.value, detail))

    def p4_5(self) -> None:
        record, rec = self.reflect(Phase.P4_5)
        if self.policy_stop(rec):
            return
        if record.applied:
            self.contract = apply_contract_patch(self.contract, record.patch, self.pending[2])
        self.state.advance(Phase.P4)

    def executor_contract(self) -> AcceptanceContract:
        # a deferred slot is re-opened for every attempt so each new run binds afresh
        if self.contract.run_id_deferred or self.deferred:
            self.deferred = True
            return replace(self.contract, run_id=None, run_id_deferred=True)
        return self.contract

    def _take_claim(self, claim: Claim) -> None:
        self.claim = claim
        if self.deferred:
            self.contract = self.contract.bind_run_id(claim.run_id)

    def p5(self) -> None:
        try:
            claim = self.executor.execute(self.executor_contract(), self.store)
        except StoreUnreachable as exc:
            self.finish(LedgerStatus.HALTED, (FailureClass.TRACKER_UNREACHABLE.value, f"tracker unreachable: {exc.detail}"))
            return
        except ExecutionFailure as exc:
            self.close_record("failed")
            detail = f"execution failed: {exc}"
            if not self.go_retry(Phase.P5_5, FailureClass.NOT_FINISHED, detail, None):
                self.finish(LedgerStatus.EXECUTION_FAILED, (FailureClass.NOT_FINISHED.value, detail))
            return
        self._take_claim(claim)
        if not self.variant.verification_gate_enabled:
            self.state.advance(Phase.P7)
        else:
            self.state.advance(Phase.P6)

    def p5_5(self) -> None:
        _, rec = self.reflect(Phase.P5_5)
        if self.policy_stop(rec):
            return
        self.state.advance(Phase.P5)

    def p6(self) -> None:
        assert self.claim is not None
        if self.claim.scope_issue:
            outcome = VerificationOutcome(False, FailureClass.SCOPE_ISSUE, "task scope issue reported by executor")
        else:
            outcome = verify(self.contract, self.claim.run_id, self.store,
                             check_run_id_format=self.config.verify_run_id_format)
        if outcome.passed:
            self.close_record("passed")
            self.state.advance(Phase.P7)
            return
        self.close_record("failed")
        failure = outcome.failure
        assert failure is not None
        target = route(failure)
        if target is RoutingTarget.HALT:
            self.finish(LedgerStatus.HALTED, (failure.value, outcome.detail))
            return
        if target is RoutingTarget.PHASE_3:
            if self.variant.retries_enabled and self.replans < self.config.max_replans:
                self.replans += 1
                self.history.append((Phase.P3.value, f"{self.contract.task_id}:replan"))
                self.state.advance(Phase.P3)
                return
        elif self.go_retry(_TARGET_PHASE[target], failure, outcome.detail, outcome.subject):
            return
        self.finish(LedgerStatus.VERIFICATION_FAILED, (failure.value, outcome.detail))

    def p6_5(self) -> None:
        record, rec = self.reflect(Phase.P6_5)
        if self.policy_stop(rec):
            return
        if record.applied:
            assert self.claim is not None
            try:
                self._take_claim(self.executor.recover(self.executor_contract(), self.store, self.claim))
            except StoreUnreachable as exc:
                self.finish(LedgerStatus.HALTED, (FailureClass.TRACKER_UNREACHABLE.value, f"tracker unreachable: {exc.detail}"))
                return
            except ExecutionFailure:
                pass  # the next verification reports whatever is still missing
        self.state.advance(Phase.P6)

    def p7(self) -> None:
        assert self.claim is not None
        if self.variant.verification_gate_enabled:
            try:
                metrics = observed_metrics(self.contract, self.store, self.claim.run_id)
            except StoreError:
                metrics = {}
            evidence = Evidence(self.store.run_url(self.claim.run_id), metrics, tuple(self.contract.artifacts))
        else:
            # nothing was checked, so the entry repeats what the executor said
            evidence = Evidence(self.store.run_url(self.claim.run_id), dict(self.claim.metrics), tuple(self.contract.artifacts))
        self.finish(LedgerStatus.VERIFIED_SUCCESS, evidence=evidence)

    def run(self) -> ClaimsLedgerEntry:
        handlers = {
            Phase.P3: self.p3, Phase.P4: self.p4, Phase.P4_5: self.p4_5,
            Phase.P5: self.p5, Phase.P5_5: self.p5_5, Phase.P6: self.p6,
            Phase.P6_5: self.p6_5, Phase.P7: self.p7,
        }
        while self.state.current is not Phase.TERMINAL:
            handlers[self.state.current]()
        assert self.entry is not None
        return self.entry


def run_task_traced(
    contract: AcceptanceContract,
    executor: TaskExecutor,
    reviewers: Panel,
    variant: SystemVariant,
    store: TrackingStore,
    config: PipelineConfig | None = None,
    *,
    rulebook: Rulebook | None = None,
    clock: Clock = system_clock,
    patch_ledger: PatchLedger | None = None,
) -> tuple[ClaimsLedgerEntry, PhaseState]:
    """Like :func:`run_task` but also returns the phase trail and spent budget."""
    variant.validate()
    try:
        store.ping()
    except StoreUnreachable as exc:
        raise StoreUnreachableAtStart(exc.detail) from exc
    task = _TaskRun(
        contract, executor, reviewers, variant, store,
        config or PipelineConfig(), rulebook or default_rulebook(), clock,
        patch_ledger if patch_ledger is not None else PatchLedger(),
    )
    return task.run(), task.state


def run_task(*args: Any, **kwargs: Any) -> ClaimsLedgerEntry:
    """Drive one task to a terminal ledger entry.

    Arguments are those of :func:`run_task_traced`. Raises
    ``StoreUnreachableAtStart`` when the store cannot be pinged before any
    phase runs and ``MisconfiguredVariant`` for an inconsistent variant.
    """
    return run_task_traced(*args, **kwargs)[0]


__all__ = [
    "BASELINE_A",
    "BASELINE_B",
    "EVIBOUND",
    "Claim",
    "EvidenceLogging",
    "ExecutionFailure",
    "IllegalPhaseTransition",
    "MisconfiguredVariant",
    "Phase",
    "PhaseState",
    "PipelineConfig",
    "RetryBudget",
    "StoreUnreachableAtStart",
    "SystemVariant",
    "TaskExecutor",
    "VARIANTS",
    "run_task",
    "run_task_traced",
    "variant_by_name",
]
