"""Scripted executors and reviewer panels.

Behaviours are plain data so task scripts can live in JSON next to their
contracts. An executor never touches storage except through the store API.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

from .approval import PANEL, ReviewerId, ReviewerVerdict
from .contract import AcceptanceContract, MetricSpec, ValueType
from .pipeline import Claim, ExecutionFailure
from .store import RunStatus, TrackingStore


class Binding(str, enum.Enum):
    OWN = "own"  # open a fresh run and claim it
    CONTRACT = "contract"  # work in a fresh run but report the contract's run id unless it is deferred
    FABRICATED = "fabricated"  # claim a made-up id, write nothing


@dataclass(frozen=True)
class Behavior:
    """One execution attempt.

    ``artifacts=None`` logs every contract artifact; ``metrics=None`` logs
    every contract metric. ``claim_overrides`` changes what is reported
    without changing what is logged.
    """

    binding: Binding = Binding.OWN
    artifacts: tuple[str, ...] | None = None
    skip_artifacts: tuple[str, ...] = ()
    metrics: tuple[str, ...] | None = None
    metric_values: Mapping[str, float] = field(default_factory=dict)
    claim_overrides: Mapping[str, float] = field(default_factory=dict)
    status: RunStatus | None = RunStatus.FINISHED
    crash: bool = False
    scope_issue: bool = False
    payloads: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["binding"] = self.binding.value
        out["status"] = self.status.value if self.status else None
        for key in ("artifacts", "skip_artifacts", "metrics"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Behavior:
        def tup(key: str) -> tuple[str, ...] | None:
            return None if data.get(key) is None else tuple(data[key])

        status = data.get("status", "FINISHED")
        return cls(
            binding=Binding(data.get("binding", "own")),
            artifacts=tup("artifacts"),
            skip_artifacts=tup("skip_artifacts") or (),
            metrics=tup("metrics"),
            metric_values=dict(data.get("metric_values", {})),
            claim_overrides=dict(data.get("claim_overrides", {})),
            status=RunStatus(status) if status else None,
            crash=bool(data.get("crash", False)),
            scope_issue=bool(data.get("scope_issue", False)),
            payloads=dict(data.get("payloads", {})),
        )


def default_value(name: str, contract: AcceptanceContract) -> float:
    """A value the contract accepts: interval midpoint, else the minimum, else 1."""
    spec = contract.metrics.get(name, MetricSpec())
    bounds = (contract.required_metrics or {}).get(name) or spec.range
    if bounds is not None:
        lo, hi = bounds
        value = (lo + hi) / 2
        if spec.value_type is ValueType.INT:
            value = math.floor(value)
            if value < lo:
                value = math.ceil(lo)
        return value
    if spec.min is not None:
        return math.ceil(spec.min) if spec.value_type is ValueType.INT else spec.min
    return 1 if spec.value_type is ValueType.INT else 1.0


def artifact_bytes(task_id: str, path: str, payload: Any = None) -> bytes:
    if payload is not None:
        return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode()
    if path.endswith(".json"):
        return (json.dumps({"artifact": path, "task_id": task_id}, sort_keys=True) + "\n").encode()
    return f"{task_id}:{path}\n".encode()


def fabricated_run_id(task_id: str, attempt: int) -> str:
    return hashlib.sha256(f"{task_id}/{attempt}".encode()).hexdigest()[:32]


def perform(behavior: Behavior, contract: AcceptanceContract, store: TrackingStore, attempt: int) -> Claim:
    """Carry out one behaviour against ``store`` and return what the agent claims."""
    values = {name: behavior.metric_values.get(name, default_value(name, contract)) for name in contract.metrics}
    claimed = {**values, **behavior.claim_overrides}

    if behavior.binding is Binding.FABRICATED:
        run_id = fabricated_run_id(contract.task_id, attempt)
        return Claim(run_id, claimed, behavior.scope_issue)
    run_id = store.create_run()
    logged = contract.metrics.keys() if behavior.metrics is None else behavior.metrics
    for name in logged:
        store.log_metric(run_id, name, values.get(name, behavior.metric_values.get(name, 1.0)))
    paths = contract.artifacts if behavior.artifacts is None else behavior.artifacts
    for path in paths:
        if path not in behavior.skip_artifacts:
            store.log_artifact(run_id, path, artifact_bytes(contract.task_id, path, behavior.payloads.get(path)))
    if behavior.crash:
        store.set_status(run_id, RunStatus.FAILED)
        raise ExecutionFailure(f"{contract.task_id}: process exited during attempt {attempt}")
    if behavior.status is not None and behavior.status is not RunStatus.RUNNING:
        store.set_status(run_id, behavior.status)
    if behavior.binding is Binding.CONTRACT and not contract.run_id_deferred:
        # the work happened in its own run, but the agent reports the contract's id verbatim
        return Claim(contract.run_id or "", claimed, behavior.scope_issue)
    return Claim(run_id, claimed, behavior.scope_issue)


class ScriptedExecutor:
    """Plays back ``attempts`` for execution and ``recoveries`` for evidence
    regeneration; the last behaviour in each list repeats."""

    def __init__(self, attempts: Sequence[Behavior], recoveries: Sequence[Behavior] = ()):
        if not attempts:
            raise ValueError("need at least one behaviour")
        self.attempts = list(attempts)
        self.recoveries = list(recoveries) or self.attempts
        self.executed = 0
        self.recovered = 0
        self.calls = 0

    def execute(self, contract: AcceptanceContract, store: TrackingStore) -> Claim:
        behavior = self.attempts[min(self.executed, len(self.attempts) - 1)]
        self.executed += 1
        self.calls += 1
        return perform(behavior, contract, store, self.calls)

    def recover(self, contract: AcceptanceContract, store: TrackingStore, claim: Claim) -> Claim:
        behavior = self.recoveries[min(self.recovered, len(self.recoveries) - 1)]
        self.recovered += 1
        self.calls += 1
        return perform(behavior, contract, store, self.calls)


@dataclass(frozen=True)
class Objection:
    """A reviewer rejects whenever the contract still declares any of ``metrics_any``
    (or always, when that list is empty)."""

    reviewer: ReviewerId
    confidence: float
    rationale: str
    concern: str | None = None
    metrics_any: tuple[str, ...] = ()

    def fires(self, contract: AcceptanceContract) -> bool:
        return not self.metrics_any or any(m in contract.metrics for m in self.metrics_any)

    def to_dict(self) -> dict[str, Any]:
        return {
            "reviewer": self.reviewer.value,
            "confidence": self.confidence,
            "rationale": self.rationale,
            "concern": self.concern,
            "metrics_any": list(self.metrics_any),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Objection:
        return cls(
            ReviewerId(data["reviewer"]),
            float(data["confidence"]),
            data["rationale"],
            data.get("concern"),
            tuple(data.get("metrics_any", ())),
        )


DEFAULT_CONFIDENCE = {
    ReviewerId.OPS_COMMANDER: 0.9,
    ReviewerId.QUALITY_SAFETY_MONITOR: 0.85,
    ReviewerId.INFRASTRUCTURE_REVIEWER: 0.8,
}


class ScriptedPanel:
    def __init__(self, objections: Sequence[Objection] = (), confidence: Mapping[ReviewerId, float] | None = None):
        self.objections = tuple(objections)
        self.confidence = dict(confidence or DEFAULT_CONFIDENCE)

    def __call__(self, contract: AcceptanceContract) -> list[ReviewerVerdict]:
        verdicts = []
        for reviewer in PANEL:
            objection = next((o for o in self.objections if o.reviewer is reviewer and o.fires(contract)), None)
            if objection is None:
                verdicts.append(ReviewerVerdict(reviewer, True, self.confidence[reviewer], "contract is checkable"))
            else:
                verdicts.append(ReviewerVerdict(reviewer, False, objection.confidence, objection.rationale, objection.concern))
        return verdicts

    def to_dict(self) -> dict[str, Any]:
        return {
            "objections": [o.to_dict() for o in self.objections],
            "confidence": {r.value: c for r, c in self.confidence.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScriptedPanel:
        confidence = {ReviewerId(k): float(v) for k, v in data.get("confidence", {}).items()} or None
        return cls([Objection.from_dict(o) for o in data.get("objections", [])], confidence)
