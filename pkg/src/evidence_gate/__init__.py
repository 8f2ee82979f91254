"""Evidence-bound task promotion.

A task result is promoted to success only when its evidence can be queried
back from a run-tracking store. Two gates enforce this: an approval gate that
checks the acceptance contract before execution, and a verification gate that
checks the claimed run afterwards. Failures route to bounded retry phases and
every outcome lands in a claims ledger that can be audited independently.
"""

from __future__ import annotations

from .approval import (
    ApprovalDecision,
    GateConfig,
    Outcome,
    ReviewerId,
    ReviewerVerdict,
    WrongPanelSize,
    approve,
    evaluate_consensus,
)
from .contract import (
    AcceptanceContract,
    CheckId,
    MalformedDocument,
    MetricSpec,
    MissingField,
    SchemaViolation,
    ValueType,
    check_schema,
    detect_placeholder,
    parse_contract,
    serialize_contract,
)
from .ledger import (
    AuditReport,
    AuditVerdict,
    ClaimsLedgerEntry,
    EmptyLedger,
    Evidence,
    LedgerStatus,
    MalformedLedger,
    audit_ledger,
    emit_ledger,
    load_ledger,
)
from .pipeline import (
    BASELINE_A,
    BASELINE_B,
    EVIBOUND,
    Claim,
    ExecutionFailure,
    MisconfiguredVariant,
    PipelineConfig,
    StoreUnreachableAtStart,
    SystemVariant,
    run_task,
)
from .reflection import Decision, Patch, PatchAction, PolicyRecommendation, Rulebook, default_rulebook, generate_patch
from .verification import FailureClass, RoutingTarget, VerificationOutcome, route, verify

__version__ = "0.1.0"

__all__ = [
    "AcceptanceContract",
    "ApprovalDecision",
    "AuditReport",
    "AuditVerdict",
    "BASELINE_A",
    "BASELINE_B",
    "CheckId",
    "Claim",
    "ClaimsLedgerEntry",
    "Decision",
    "EVIBOUND",
    "EmptyLedger",
    "Evidence",
    "ExecutionFailure",
    "FailureClass",
    "GateConfig",
    "LedgerStatus",
    "MalformedDocument",
    "MalformedLedger",
    "MetricSpec",
    "MisconfiguredVariant",
    "MissingField",
    "Outcome",
    "Patch",
    "PatchAction",
    "PipelineConfig",
    "PolicyRecommendation",
    "ReviewerId",
    "ReviewerVerdict",
    "RoutingTarget",
    "Rulebook",
    "SchemaViolation",
    "StoreUnreachableAtStart",
    "SystemVariant",
    "ValueType",
    "VerificationOutcome",
    "WrongPanelSize",
    "approve",
    "audit_ledger",
    "check_schema",
    "default_rulebook",
    "detect_placeholder",
    "emit_ledger",
    "evaluate_consensus",
    "generate_patch",
    "load_ledger",
    "parse_contract",
    "route",
    "run_task",
    "serialize_contract",
    "verify",
]
