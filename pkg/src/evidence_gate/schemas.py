"""JSON Schemas for the machine-readable files this package writes.

Every writer validates its payload against these before touching disk, so a
schema drift shows up as an exception rather than a silently odd file.
"""

from __future__ import annotations

from typing import Any

import jsonschema

_TIMESTAMP = {"type": "string", "pattern": r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?Z$"}
_STATUSES = [
    "VERIFIED_SUCCESS",
    "VERIFICATION_FAILED",
    "BLOCKED_AT_APPROVAL",
    "EXECUTION_FAILED",
    "ESCALATED",
    "HALTED",
]

LEDGER_ENTRY_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["task_id", "status", "verification_timestamp"],
    "additionalProperties": False,
    "properties": {
        "task_id": {"type": "string", "minLength": 1},
        "status": {"enum": _STATUSES},
        "run_id": {"type": "string"},
        "evidence": {
            "type": "object",
            "required": ["mlflow_url", "metrics", "artifacts"],
            "additionalProperties": False,
            "properties": {
                "mlflow_url": {"type": ["string", "null"]},
                "metrics": {"type": "object", "additionalProperties": {"type": "number"}},
                "artifacts": {"type": "array", "items": {"type": "string"}},
            },
        },
        "verification_timestamp": _TIMESTAMP,
        "retry_history": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["phase", "patch_id"],
                "additionalProperties": False,
                "properties": {"phase": {"type": "string"}, "patch_id": {"type": "string"}},
            },
        },
        "approval": {
            "type": "object",
            "required": ["outcome", "violations", "failing_reviewers"],
            "properties": {
                "outcome": {"enum": ["Approved", "Rejected", "HardVeto"]},
                "violations": {"type": "array"},
                "failing_reviewers": {"type": "array", "items": {"type": "string"}},
            },
        },
        "failure": {
            "type": "object",
            "required": ["class", "detail"],
            "properties": {"class": {"type": "string"}, "detail": {"type": "string"}},
        },
    },
}

LEDGER_SCHEMA: dict[str, Any] = {"type": "array", "items": LEDGER_ENTRY_SCHEMA}

AUDIT_REPORT_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["tasks", "hallucinated", "total", "hallucination_rate"],
    "properties": {
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["task_id", "verdict", "detail"],
                "properties": {
                    "task_id": {"type": "string"},
                    "verdict": {"enum": ["VERIFIED", "HALLUCINATED", "BLOCKED", "FAILED"]},
                    "detail": {"type": "string"},
                },
            },
        },
        "hallucinated": {"type": "integer", "minimum": 0},
        "total": {"type": "integer", "minimum": 1},
        "hallucination_rate": {"type": "number", "minimum": 0, "maximum": 1},
    },
}

PATCH_RECORD_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["task_id", "attempt", "phase", "failure", "patch_id", "action", "confidence",
                 "provenance", "applied", "decision", "risk_score", "outcome"],
    "properties": {
        "confidence": {"type": "number", "minimum": 0, "maximum": 1},
        "risk_score": {"type": "number", "minimum": 0, "maximum": 1},
        "decision": {"enum": ["RETRY", "ESCALATE", "ABORT"]},
        "applied": {"type": "boolean"},
        "attempt": {"type": "integer", "minimum": 1},
    },
}

SUMMARY_ROW_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["system", "approval_gate", "verification_gate", "attempted", "verified_pass",
                 "blocked", "hallucinated", "hallucination_rate", "hallucination"],
    "properties": {
        "attempted": {"type": "string", "pattern": r"^\d+/\d+$"},
        "verified_pass": {"type": "string", "pattern": r"^\d+/\d+$"},
        "hallucination": {"type": "string", "pattern": r"^\d+% \(\d+/\d+\)$"},
    },
}


_validators: dict[int, jsonschema.protocols.Validator] = {}


def validator(schema: dict[str, Any]) -> jsonschema.protocols.Validator:
    """Compiled validator for one of the schemas above, built on first use."""
    key = id(schema)
    if key not in _validators:
        cls = jsonschema.validators.validator_for(schema)
        cls.check_schema(schema)
        _validators[key] = cls(schema)
    return _validators[key]


def check(payload: Any, schema: dict[str, Any]) -> Any:
    """Raise ``jsonschema.ValidationError`` on the first problem, else return ``payload``."""
    error = jsonschema.exceptions.best_match(validator(schema).iter_errors(payload))
    if error is not None:
        raise error
    return payload
