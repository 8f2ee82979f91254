from __future__ import annotations

import threading
from dataclasses import replace

from .base import (
    ArtifactEntry,
    RunNotFound,
    RunRecord,
    RunStatus,
    StoreUnreachable,
    TrackingStore,
    check_artifact_path,
    check_metric,
    run_id_factory,
)


class MemoryStore(TrackingStore):
    """In-process store. Set ``unreachable`` or add run ids to ``failing_listings``
    to inject faults."""

    def __init__(self, *, seed: int | None = None):
        self._runs: dict[str, RunRecord] = {}
        self._files: dict[str, dict[str, bytes]] = {}
        self._new_id = run_id_factory(seed)
        self._lock = threading.Lock()
        self.unreachable = False
        self.failing_listings: set[str] = set()

    def ping(self) -> None:
        if self.unreachable:
            raise StoreUnreachable("memory store marked unreachable")

    def _record(self, run_id: str) -> RunRecord:
        self.ping()
        try:
            return self._runs[run_id]
        except KeyError:
            raise RunNotFound(f"no run {run_id!r}") from None

    def get_run(self, run_id: str) -> RunRecord:
        with self._lock:
            return self._record(run_id)

    def list_artifacts(self, run_id, path=None, *, recursive=False):
        with self._lock:
            self._record(run_id)
            if run_id in self.failing_listings:
                raise StoreUnreachable(f"artifact listing failed for {run_id}")
            files = dict(self._files[run_id])
        prefix = f"{path.strip('/')}/" if path else ""
        out: dict[str, ArtifactEntry] = {}
        for name, data in files.items():
            if not name.startswith(prefix):
                continue
            rest = name[len(prefix):]
            if recursive or "/" not in rest:
                out[name] = ArtifactEntry(name, False, len(data))
            else:
                child = prefix + rest.split("/", 1)[0]
                out[child] = ArtifactEntry(child, True, 0)
        return sorted(out.values())

    def create_run(self) -> str:
        with self._lock:
            self.ping()
            run_id = self._new_id()
            while run_id in self._runs:
                run_id = self._new_id()
            self._runs[run_id] = RunRecord(run_id, RunStatus.RUNNING, {}, {}, f"memory:runs/{run_id}/artifacts")
            self._files[run_id] = {}
            return run_id

    def set_status(self, run_id, status):
        with self._lock:
            record = self._record(run_id)
            self._runs[run_id] = replace(record, status=self._next_status(record, status))

    def log_metric(self, run_id, name, value):
        value = check_metric(name, value)
        with self._lock:
            record = self._record(run_id)
            self._require_running(record, "log a metric")
            self._runs[run_id] = replace(record, metrics={**record.metrics, name: value})

    def log_param(self, run_id, name, value):
        with self._lock:
            record = self._record(run_id)
            self._require_running(record, "log a param")
            self._runs[run_id] = replace(record, params={**record.params, name: str(value)})

    def log_artifact(self, run_id, path, data):
        check_artifact_path(path)
        with self._lock:
            self._require_running(self._record(run_id), "log an artifact")
            files = self._files[run_id]
            parents = {path[:i] for i, ch in enumerate(path) if ch == "/"}
            if parents & files.keys() or any(name.startswith(path + "/") for name in files):
                raise ValueError(f"artifact path {path!r} clashes with an existing file or directory")
            files[path] = bytes(data)

    # tampering hooks used by audits and tests
    def delete_run(self, run_id: str) -> None:
        with self._lock:
            self._runs.pop(run_id, None)
            self._files.pop(run_id, None)

    def delete_artifacts(self, run_id: str) -> None:
        with self._lock:
            self._files[run_id] = {}
