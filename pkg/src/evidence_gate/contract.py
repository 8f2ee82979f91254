"""Acceptance contracts: parsing, serialization and static checks.

A contract document is UTF-8 JSON of the form::

    {
      "task_id": "T01",
      "description": "...",
      "acceptance_criteria": {
        "run_id": "...",
        "metrics": {"val_loss": {"type": "float", "range": [0, 5]}},
        "artifacts": ["model.pt"],
        "status": "FINISHED",
        "required_metrics": {"val_loss": [0, 5]}
      }
    }

``required_metrics`` is optional. A contract whose run id is allocated when
execution starts carries ``"run_id_deferred": true`` instead of a ``run_id``.
Unknown keys at any of the three levels are kept and written back unchanged.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

RUN_ID_RE = re.compile(r"^[0-9a-f]{32}$")

_PLACEHOLDER_WORDS = frozenset({"TBD", "TODO", "N/A", "PLACEHOLDER"})

_TOP_KEYS = ("task_id", "description", "acceptance_criteria")
_CRITERIA_KEYS = (
    "run_id",
    "run_id_deferred",
    "metrics",
    "artifacts",
    "status",
    "required_metrics",
)
_METRIC_KEYS = ("type", "range", "min")


class ContractError(ValueError):
    """Raised when a contract document cannot be turned into a contract."""


class MalformedDocument(ContractError):
    pass


class MissingField(ContractError):
    def __init__(self, field_path: str):
        super().__init__(f"missing required field: {field_path}")
        self.field_path = field_path


class ValueType(str, enum.Enum):
    FLOAT = "float"
    INT = "int"


class CheckId(str, enum.Enum):
    MISSING_FIELD = "MissingField"
    NOT_CHECKABLE = "NotCheckable"
    PLACEHOLDER = "Placeholder"


@dataclass(frozen=True)
class MetricSpec:
    value_type: ValueType | None = None
    range: tuple[float, float] | None = None
    min: float | None = None
    extras: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.value_type is not None:
            out["type"] = self.value_type.value
        if self.range is not None:
            out["range"] = list(self.range)
        if self.min is not None:
            out["min"] = self.min
        out.update(self.extras)
        return out


@dataclass(frozen=True)
class SchemaViolation:
    check_id: CheckId
    field_path: str
    message: str

    def __str__(self) -> str:
        return f"{self.check_id.value} {self.field_path}: {self.message}"

    def to_dict(self) -> dict[str, str]:
        return {
            "check_id": self.check_id.value,
            "field_path": self.field_path,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SchemaViolation:
        return cls(CheckId(data["check_id"]), data["field_path"], data["message"])


@dataclass(frozen=True)
class AcceptanceContract:
    task_id: str
    description: str
    run_id: str | None
    metrics: Mapping[str, MetricSpec]
    artifacts: tuple[str, ...]
    required_status: str = "FINISHED"
    required_metrics: Mapping[str, tuple[float, float]] | None = None
    run_id_deferred: bool = False
    extras: Mapping[str, Any] = field(default_factory=dict)
    criteria_extras: Mapping[str, Any] = field(default_factory=dict)

    def bind_run_id(self, run_id: str) -> AcceptanceContract:
        """Return a copy whose deferred run id slot is filled with ``run_id``."""
        return replace(self, run_id=run_id, run_id_deferred=False)

    def to_dict(self) -> dict[str, Any]:
        criteria: dict[str, Any] = {}
        if self.run_id_deferred:
            criteria["run_id_deferred"] = True
        if self.run_id is not None or not self.run_id_deferred:
            criteria["run_id"] = self.run_id
        criteria["metrics"] = {name: spec.to_dict() for name, spec in self.metrics.items()}
        criteria["artifacts"] = list(self.artifacts)
        criteria["status"] = self.required_status
        if self.required_metrics is not None:
            criteria["required_metrics"] = {k: list(v) for k, v in self.required_metrics.items()}
        criteria.update(self.criteria_extras)
        doc: dict[str, Any] = {
            "task_id": self.task_id,
            "description": self.description,
            "acceptance_criteria": criteria,
        }
        doc.update(self.extras)
        return doc


def detect_placeholder(value: str) -> bool:
    """True for angle-bracketed tokens, TBD/TODO/N/A/PLACEHOLDER and blanks."""
    text = value.strip()
    if not text:
        return True
    if len(text) >= 2 and text.startswith("<") and text.endswith(">"):
        return True
    return text.upper() in _PLACEHOLDER_WORDS


def is_run_id(value: str | None) -> bool:
    return value is not None and RUN_ID_RE.fullmatch(value) is not None


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _interval(value: Any, where: str) -> tuple[float, float]:
    if not (isinstance(value, list) and len(value) == 2 and all(_is_number(v) for v in value)):
        raise MalformedDocument(f"{where} must be a two-element numeric list")
    return (value[0], value[1])


def _parse_metric(name: str, raw: Any) -> MetricSpec:
    where = f"acceptance_criteria.metrics.{name}"
    if not isinstance(raw, dict):
        raise MalformedDocument(f"{where} must be an object")
    value_type = None
    if "type" in raw:
        try:
            value_type = ValueType(raw["type"])
        except ValueError:
            raise MalformedDocument(f"{where}.type must be 'float' or 'int'") from None
    rng = _interval(raw["range"], f"{where}.range") if "range" in raw else None
    lower = raw.get("min")
    if lower is not None and not _is_number(lower):
        raise MalformedDocument(f"{where}.min must be numeric")
    extras = {k: v for k, v in raw.items() if k not in _METRIC_KEYS}
    return MetricSpec(value_type, rng, lower, extras)


def contract_from_dict(doc: Any) -> AcceptanceContract:
    if not isinstance(doc, dict):
        raise MalformedDocument("contract document must be a JSON object")
    for key in _TOP_KEYS:
        if key not in doc:
            raise MissingField(key)
    criteria = doc["acceptance_criteria"]
    if not isinstance(criteria, dict):
        raise MalformedDocument("acceptance_criteria must be an object")

    deferred = criteria.get("run_id_deferred", False)
    if not isinstance(deferred, bool):
        raise MalformedDocument("acceptance_criteria.run_id_deferred must be a boolean")
    required = ["metrics", "artifacts", "status"]
    if not deferred:
        required.insert(0, "run_id")
    for key in required:
        if key not in criteria:
            raise MissingField(f"acceptance_criteria.{key}")

    task_id, description = doc["task_id"], doc["description"]
    run_id = criteria.get("run_id")
    for where, value in (("task_id", task_id), ("description", description)):
        if not isinstance(value, str):
            raise MalformedDocument(f"{where} must be a string")
    if run_id is not None and not isinstance(run_id, str):
        raise MalformedDocument("acceptance_criteria.run_id must be a string")

    raw_metrics = criteria["metrics"]
    if not isinstance(raw_metrics, dict):
        raise MalformedDocument("acceptance_criteria.metrics must be an object")
    metrics = {name: _parse_metric(name, spec) for name, spec in raw_metrics.items()}

    artifacts = criteria["artifacts"]
    if not isinstance(artifacts, list) or not all(isinstance(a, str) for a in artifacts):
        raise MalformedDocument("acceptance_criteria.artifacts must be a list of strings")

    status = criteria["status"]
    if status != "FINISHED":
        raise MalformedDocument("acceptance_criteria.status must be 'FINISHED'")

    required_metrics = None
    if "required_metrics" in criteria:
        raw_required = criteria["required_metrics"]
        if not isinstance(raw_required, dict):
            raise MalformedDocument("acceptance_criteria.required_metrics must be an object")
        required_metrics = {
            name: _interval(bounds, f"acceptance_criteria.required_metrics.{name}")
            for name, bounds in raw_required.items()
        }

    return AcceptanceContract(
        task_id=task_id,
        description=description,
        run_id=run_id,
        metrics=metrics,
        artifacts=tuple(artifacts),
        required_status=status,
        required_metrics=required_metrics,
        run_id_deferred=deferred,
        extras={k: v for k, v in doc.items() if k not in _TOP_KEYS},
        criteria_extras={k: v for k, v in criteria.items() if k not in _CRITERIA_KEYS},
    )


def parse_contract(document: bytes | str) -> AcceptanceContract:
    """Parse a contract document.

    Raises ``MalformedDocument`` for anything that is not a JSON object of the
    expected shape and ``MissingField`` when a required key is absent.
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"not UTF-8: {exc}") from None
    if not document.strip():
        raise MalformedDocument("empty document")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from None
    return contract_from_dict(doc)


def serialize_contract(contract: AcceptanceContract) -> bytes:
    return (json.dumps(contract.to_dict(), indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _check_artifact(index: int, path: str) -> SchemaViolation | None:
    where = f"acceptance_criteria.artifacts[{index}]"
    if not path.strip():
        return SchemaViolation(CheckId.NOT_CHECKABLE, where, "artifact is not named")
    if detect_placeholder(path):
        return SchemaViolation(CheckId.PLACEHOLDER, where, f"placeholder artifact name {path!r}")
    parts = path.split("/")
    if path.startswith("/") or ".." in parts or "" in parts:
        return SchemaViolation(CheckId.NOT_CHECKABLE, where, f"artifact path {path!r} is not a relative file path")
    return None


def check_schema(contract: AcceptanceContract, *, run_id_format: bool = False) -> list[SchemaViolation]:
    """Run the static approval checks: required fields, checkability, placeholders.

    With ``run_id_format`` a concrete run id must also be 32 lowercase hex
    characters. The result is sorted by field path.
    """
    out: list[SchemaViolation] = []
    add = out.append

    if not contract.task_id.strip():
        add(SchemaViolation(CheckId.MISSING_FIELD, "task_id", "task_id is empty"))
    if not contract.description.strip():
        add(SchemaViolation(CheckId.MISSING_FIELD, "description", "description is empty"))
    elif detect_placeholder(contract.description):
        add(SchemaViolation(CheckId.PLACEHOLDER, "description", f"placeholder description {contract.description!r}"))

    run_path = "acceptance_criteria.run_id"
    if contract.run_id_deferred:
        if contract.run_id is not None:
            add(SchemaViolation(CheckId.NOT_CHECKABLE, run_path, "run_id given although marked deferred"))
    elif contract.run_id is None or not contract.run_id.strip():
        add(SchemaViolation(CheckId.MISSING_FIELD, run_path, "run_id is empty"))
    elif detect_placeholder(contract.run_id):
        add(SchemaViolation(CheckId.PLACEHOLDER, run_path, f"run_id must be concrete, not {contract.run_id!r}"))
    elif run_id_format and not is_run_id(contract.run_id.strip()):
        add(SchemaViolation(CheckId.NOT_CHECKABLE, run_path, "run_id is not 32 lowercase hex characters"))

    if not contract.metrics:
        add(SchemaViolation(CheckId.NOT_CHECKABLE, "acceptance_criteria.metrics", "no metrics specified"))
    for name, spec in contract.metrics.items():
        where = f"acceptance_criteria.metrics.{name}"
        if detect_placeholder(name):
            add(SchemaViolation(CheckId.PLACEHOLDER, where, f"placeholder metric name {name!r}"))
        if spec.value_type is None:
            add(SchemaViolation(CheckId.NOT_CHECKABLE, f"{where}.type", "metric has no declared type"))
        if spec.range is not None and spec.range[0] > spec.range[1]:
            add(SchemaViolation(CheckId.NOT_CHECKABLE, f"{where}.range", "range lower bound exceeds upper bound"))

    if not contract.artifacts:
        add(SchemaViolation(CheckId.NOT_CHECKABLE, "acceptance_criteria.artifacts", "empty artifact lists"))
    for i, path in enumerate(contract.artifacts):
        violation = _check_artifact(i, path)
        if violation is not None:
            add(violation)

    for name, (lo, hi) in (contract.required_metrics or {}).items():
        where = f"acceptance_criteria.required_metrics.{name}"
        if name not in contract.metrics:
            add(SchemaViolation(CheckId.NOT_CHECKABLE, where, "required metric is not declared under metrics"))
        if lo > hi:
            add(SchemaViolation(CheckId.NOT_CHECKABLE, where, "interval lower bound exceeds upper bound"))

    out.sort(key=lambda v: (v.field_path, v.check_id.value, v.message))
    return out
