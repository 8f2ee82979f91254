"""Claims ledger: one entry per task, file round-trip, and the independent audit."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import jsonschema

from . import schemas
from .approval import ApprovalDecision
from .contract import AcceptanceContract, MetricSpec, ValueType
from .store import StoreUnreachable, TrackingStore
from .verification import FailureClass, verify

_TIMESTAMP_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?Z$")


class LedgerStatus(str, enum.Enum):
    VERIFIED_SUCCESS = "VERIFIED_SUCCESS"
    VERIFICATION_FAILED = "VERIFICATION_FAILED"
    BLOCKED_AT_APPROVAL = "BLOCKED_AT_APPROVAL"
    EXECUTION_FAILED = "EXECUTION_FAILED"
    ESCALATED = "ESCALATED"
    HALTED = "HALTED"


class MalformedLedger(ValueError):
    pass


class EmptyLedger(ValueError):
    pass


def utc_timestamp(moment: datetime) -> str:
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Evidence:
    tracker_url: str | None
    metrics: Mapping[str, float] = field(default_factory=dict)
    artifacts: tuple[str, ...] = ()

    @property
    def empty(self) -> bool:
        return not (self.tracker_url or self.metrics or self.artifacts)

    def to_dict(self) -> dict[str, Any]:
        return {"mlflow_url": self.tracker_url, "metrics": dict(self.metrics), "artifacts": list(self.artifacts)}


@dataclass(frozen=True)
class ClaimsLedgerEntry:
    task_id: str
    status: LedgerStatus
    verification_timestamp: str
    run_id: str | None = None
    evidence: Evidence | None = None
    retry_history: tuple[tuple[str, str], ...] = ()
    approval: ApprovalDecision | None = None
    failure: tuple[str, str] | None = None

    def __post_init__(self) -> None:
        problem = self.problem()
        if problem:
            raise MalformedLedger(f"{self.task_id or '<no task>'}: {problem}")

    def problem(self) -> str | None:
        if not self.task_id:
            return "empty task_id"
        if not _TIMESTAMP_RE.fullmatch(self.verification_timestamp):
            return f"timestamp {self.verification_timestamp!r} is not UTC ISO-8601 with trailing Z"
        if self.status is LedgerStatus.VERIFIED_SUCCESS:
            if not self.run_id:
                return "VERIFIED_SUCCESS without run_id"
            if self.evidence is None or self.evidence.empty:
                return "VERIFIED_SUCCESS without evidence"
        if self.status is LedgerStatus.BLOCKED_AT_APPROVAL and self.run_id is not None:
            return "BLOCKED_AT_APPROVAL entry carries a run_id"
        return None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"task_id": self.task_id, "status": self.status.value}
        if self.run_id is not None:
            out["run_id"] = self.run_id
        if self.evidence is not None:
            out["evidence"] = self.evidence.to_dict()
        out["verification_timestamp"] = self.verification_timestamp
        if self.retry_history:
            out["retry_history"] = [{"phase": p, "patch_id": pid} for p, pid in self.retry_history]
        if self.approval is not None:
            out["approval"] = self.approval.to_dict()
        if self.failure is not None:
            out["failure"] = {"class": self.failure[0], "detail": self.failure[1]}
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ClaimsLedgerEntry:
        try:
            schemas.check(data, schemas.LEDGER_ENTRY_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise MalformedLedger(f"entry {data.get('task_id', '?') if isinstance(data, dict) else '?'}: {exc.message}") from None
        evidence = None
        if "evidence" in data:
            ev = data["evidence"]
            evidence = Evidence(ev["mlflow_url"], dict(ev["metrics"]), tuple(ev["artifacts"]))
        failure = None
        if "failure" in data:
            failure = (data["failure"]["class"], data["failure"]["detail"])
        return cls(
            task_id=data["task_id"],
            status=LedgerStatus(data["status"]),
            verification_timestamp=data["verification_timestamp"],
            run_id=data.get("run_id"),
            evidence=evidence,
            retry_history=tuple((r["phase"], r["patch_id"]) for r in data.get("retry_history", [])),
            approval=ApprovalDecision.from_dict(data["approval"]) if "approval" in data else None,
            failure=failure,
        )


def _render(value: Any, depth: int) -> str:
    # containers holding only scalars stay on one line, like hand-written ledgers
    if isinstance(value, dict) and any(isinstance(v, (dict, list)) for v in value.values()):
        pad = "  " * (depth + 1)
        body = ",\n".join(f"{pad}{json.dumps(k)}: {_render(v, depth + 1)}" for k, v in value.items())
        return "{\n" + body + "\n" + "  " * depth + "}"
    if isinstance(value, list) and any(isinstance(v, (dict, list)) for v in value):
        pad = "  " * (depth + 1)
        body = ",\n".join(pad + _render(v, depth + 1) for v in value)
        return "[\n" + body + "\n" + "  " * depth + "]"
    return json.dumps(value, ensure_ascii=False)


def dump_entry(entry: ClaimsLedgerEntry) -> str:
    return _render(entry.to_dict(), 0)


def load_entry(text: str | bytes) -> ClaimsLedgerEntry:
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise MalformedLedger(f"invalid JSON: {exc}") from None
    return ClaimsLedgerEntry.from_dict(data)


def dumps_ledger(entries: Iterable[ClaimsLedgerEntry]) -> str:
    ordered = sorted(entries, key=lambda e: e.task_id)
    payload = [e.to_dict() for e in ordered]
    schemas.check(payload, schemas.LEDGER_SCHEMA)
    if not payload:
        return "[]\n"
    return _render(payload, 0) + "\n"


def loads_ledger(text: str | bytes) -> list[ClaimsLedgerEntry]:
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise MalformedLedger(f"invalid JSON: {exc}") from None
    if not isinstance(data, list):
        raise MalformedLedger("ledger must be a JSON array")
    entries = [ClaimsLedgerEntry.from_dict(item) for item in data]
    seen: set[str] = set()
    for entry in entries:
        if entry.task_id in seen:
            raise MalformedLedger(f"duplicate entry for task {entry.task_id}")
        seen.add(entry.task_id)
    return entries


def emit_ledger(entries: Iterable[ClaimsLedgerEntry], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_ledger(entries), encoding="utf-8")
    return path


def load_ledger(path: str | Path) -> list[ClaimsLedgerEntry]:
    return loads_ledger(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# audit


class AuditVerdict(str, enum.Enum):
    VERIFIED = "VERIFIED"
    HALLUCINATED = "HALLUCINATED"
    BLOCKED = "BLOCKED"
    FAILED = "FAILED"


@dataclass(frozen=True)
class AuditReport:
    verdicts: Mapping[str, AuditVerdict]
    details: Mapping[str, str]

    @property
    def total(self) -> int:
        return len(self.verdicts)

    @property
    def hallucinated(self) -> int:
        return sum(v is AuditVerdict.HALLUCINATED for v in self.verdicts.values())

    @property
    def verified(self) -> int:
        return sum(v is AuditVerdict.VERIFIED for v in self.verdicts.values())

    @property
    def rate(self) -> float:
        return self.hallucinated / self.total

    def summary_line(self) -> str:
        return f"hallucination_rate: {self.rate:.3f} ({self.hallucinated}/{self.total})"

    def to_dict(self) -> dict[str, Any]:
        payload = {
            "tasks": [
                {"task_id": t, "verdict": v.value, "detail": self.details[t]}
                for t, v in sorted(self.verdicts.items())
            ],
            "hallucinated": self.hallucinated,
            "total": self.total,
            "hallucination_rate": self.rate,
        }
        return schemas.check(payload, schemas.AUDIT_REPORT_SCHEMA)


def evidence_contract(entry: ClaimsLedgerEntry) -> AcceptanceContract:
    """Contract reconstructed from what an entry claims: its artifacts must exist
    and each claimed metric must equal the logged value."""
    evidence = entry.evidence or Evidence(None)
    metrics = {
        name: MetricSpec(ValueType.INT if isinstance(v, int) else ValueType.FLOAT)
        for name, v in evidence.metrics.items()
    }
    return AcceptanceContract(
        task_id=entry.task_id,
        description="audit",
        run_id=entry.run_id,
        metrics=metrics,
        artifacts=tuple(evidence.artifacts),
        required_metrics={name: (v, v) for name, v in evidence.metrics.items()},
    )


def _is_claim(entry: ClaimsLedgerEntry) -> bool:
    if entry.status is LedgerStatus.VERIFIED_SUCCESS:
        return True
    # without an approved contract, a failed verification is a refuted success
    # claim rather than a failure report under an agreed contract
    return entry.status is LedgerStatus.VERIFICATION_FAILED and not (entry.approval and entry.approval.approved)


def audit_ledger(entries: Sequence[ClaimsLedgerEntry], store: TrackingStore) -> AuditReport:
    """Re-check every success claim in ``entries`` against ``store``.

    A claim is HALLUCINATED when its run is not queryable, not FINISHED, lacks
    a claimed artifact, or logged a different value for a claimed metric.
    Blocked and failed tasks count towards the total only. Raises
    ``StoreUnreachable`` if the store cannot be consulted at all.
    """
    if not entries:
        raise EmptyLedger("ledger has no tasks; hallucination rate is undefined")
    store.ping()
    verdicts: dict[str, AuditVerdict] = {}
    details: dict[str, str] = {}
    for entry in entries:
        if entry.status is LedgerStatus.BLOCKED_AT_APPROVAL:
            verdicts[entry.task_id], details[entry.task_id] = AuditVerdict.BLOCKED, "blocked at approval"
            continue
        if not _is_claim(entry):
            verdicts[entry.task_id], details[entry.task_id] = AuditVerdict.FAILED, f"reported {entry.status.value}"
            continue
        outcome = verify(evidence_contract(entry), entry.run_id, store)
        if outcome.failure is FailureClass.TRACKER_UNREACHABLE:
            raise StoreUnreachable(outcome.detail)
        if outcome.passed:
            verdict = AuditVerdict.VERIFIED if entry.status is LedgerStatus.VERIFIED_SUCCESS else AuditVerdict.FAILED
        else:
            verdict = AuditVerdict.HALLUCINATED
        verdicts[entry.task_id], details[entry.task_id] = verdict, outcome.detail
    return AuditReport(verdicts, details)


def write_audit_report(report: AuditReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path
