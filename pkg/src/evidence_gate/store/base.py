from __future__ import annotations

import abc
import enum
import math
import random
import re
import secrets
from dataclasses import dataclass, field
from typing import Callable, Mapping

from ..contract import RUN_ID_RE

_METRIC_NAME_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


class RunStatus(str, enum.Enum):
    RUNNING = "RUNNING"
    FINISHED = "FINISHED"
    FAILED = "FAILED"
    KILLED = "KILLED"

    @property
    def terminal(self) -> bool:
        return self is not RunStatus.RUNNING


class ErrorKind(str, enum.Enum):
    NOT_FOUND = "NotFound"
    UNREACHABLE = "Unreachable"
    CORRUPT = "Corrupt"


class StoreError(Exception):
    kind: ErrorKind = ErrorKind.CORRUPT

    def __init__(self, detail: str):
        super().__init__(f"{self.kind.value}: {detail}")
        self.detail = detail


class RunNotFound(StoreError):
    kind = ErrorKind.NOT_FOUND


class StoreUnreachable(StoreError):
    """Transport or availability failure. Never used for a missing run."""

    kind = ErrorKind.UNREACHABLE


class StoreCorrupt(StoreError):
    kind = ErrorKind.CORRUPT


class IllegalTransition(ValueError):
    pass


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    status: RunStatus
    metrics: Mapping[str, float] = field(default_factory=dict)
    params: Mapping[str, str] = field(default_factory=dict)
    artifact_root: str = ""


@dataclass(frozen=True, order=True)
class ArtifactEntry:
    path: str
    is_directory: bool = False
    size_bytes: int = 0


def check_artifact_path(path: str) -> str:
    parts = path.split("/")
    if not path or path.startswith("/") or ".." in parts or "" in parts or "." in parts:
        raise ValueError(f"invalid artifact path {path!r}")
    return path


def check_metric(name: str, value: float) -> float:
    if not _METRIC_NAME_RE.fullmatch(name) or name in (".", ".."):
        raise ValueError(f"invalid metric name {name!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"metric {name} must be finite, got {value}")
    return value


def run_id_factory(seed: int | None = None) -> Callable[[], str]:
    """Fresh 32-hex run ids; seeded factories repeat their sequence exactly."""
    if seed is None:
        return lambda: secrets.token_hex(16)
    rng = random.Random(seed)
    return lambda: f"{rng.getrandbits(128):032x}"


def is_valid_run_id(run_id: str) -> bool:
    return RUN_ID_RE.fullmatch(run_id) is not None


class TrackingStore(abc.ABC):
    """Run-tracking backend that the verification gate reads evidence from."""

    @abc.abstractmethod
    def ping(self) -> None:
        """Raise ``StoreUnreachable`` when the backend cannot be used."""

    @abc.abstractmethod
    def get_run(self, run_id: str) -> RunRecord:
        ...

    @abc.abstractmethod
    def list_artifacts(self, run_id: str, path: str | None = None, *, recursive: bool = False) -> list[ArtifactEntry]:
        """List artifacts below ``path``.

        Non-recursive listings return immediate children, directories
        included. Recursive listings return every file at any depth. Paths are
        relative to the run's artifact root and sorted.
        """

    @abc.abstractmethod
    def create_run(self) -> str:
        ...

    @abc.abstractmethod
    def set_status(self, run_id: str, status: RunStatus | str) -> None:
        ...

    @abc.abstractmethod
    def log_metric(self, run_id: str, name: str, value: float) -> None:
        ...

    @abc.abstractmethod
    def log_param(self, run_id: str, name: str, value: str) -> None:
        ...

    @abc.abstractmethod
    def log_artifact(self, run_id: str, path: str, data: bytes) -> None:
        ...

    def run_url(self, run_id: str) -> str:
        return f"runs/{run_id}"

    def _require_running(self, record: RunRecord, what: str) -> None:
        if record.status is not RunStatus.RUNNING:
            raise IllegalTransition(f"cannot {what} on run {record.run_id} in state {record.status.value}")

    @staticmethod
    def _next_status(record: RunRecord, status: RunStatus | str) -> RunStatus:
        status = RunStatus(status)
        if record.status.terminal:
            raise IllegalTransition(f"run {record.run_id} is {record.status.value}; cannot move to {status.value}")
        return status
