"""Run-tracking stores: the evidence substrate read by the verification gate."""

from __future__ import annotations

from pathlib import Path

from .base import (
    ArtifactEntry,
    ErrorKind,
    IllegalTransition,
    RunNotFound,
    RunRecord,
    RunStatus,
    StoreCorrupt,
    StoreError,
    StoreUnreachable,
    TrackingStore,
    is_valid_run_id,
    run_id_factory,
)
from .filestore import FileStore
from .memory import MemoryStore
from .rest import RestStore

__all__ = [
    "ArtifactEntry",
    "ErrorKind",
    "FileStore",
    "IllegalTransition",
    "MemoryStore",
    "RestStore",
    "RunNotFound",
    "RunRecord",
    "RunStatus",
    "StoreCorrupt",
    "StoreError",
    "StoreUnreachable",
    "TrackingStore",
    "is_valid_run_id",
    "open_store",
    "run_id_factory",
]


def open_store(uri: str, *, create: bool = True, seed: int | None = None) -> TrackingStore:
    """Open a store from a URI.

    ``http://`` / ``https://`` select the REST client, ``memory:`` an
    in-process store, and ``file://<path>`` or a bare path the file store.
    With ``create=False`` a missing file-store root is left missing, so reads
    report it as unreachable.
    """
    if uri.startswith(("http://", "https://")):
        return RestStore(uri)
    if uri == "memory:" or uri.startswith("memory:"):
        return MemoryStore(seed=seed)
    if uri.startswith("file://"):
        uri = uri[len("file://"):]
    return FileStore(Path(uri), create=create, seed=seed)
