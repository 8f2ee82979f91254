"""Directory-backed tracking store.

Layout under the store root::

    runs/<run_id>/meta                 JSON: {"status": ..., "params": {...}}
    runs/<run_id>/metrics/<name>       one value per line, last line wins
    runs/<run_id>/artifacts/<path...>  artifact files
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from .base import (
    ArtifactEntry,
    RunNotFound,
    RunRecord,
    RunStatus,
    StoreCorrupt,
    StoreUnreachable,
    TrackingStore,
    check_artifact_path,
    check_metric,
    is_valid_run_id,
    run_id_factory,
)


class FileStore(TrackingStore):
    def __init__(self, root: str | os.PathLike[str], *, create: bool = True, seed: int | None = None):
        self.root = Path(root)
        if create:
            (self.root / "runs").mkdir(parents=True, exist_ok=True)
        self._new_id = run_id_factory(seed)
        self._guard = threading.Lock()
        self._run_locks: dict[str, threading.Lock] = {}

    def _lock_for(self, run_id: str) -> threading.Lock:
        with self._guard:
            return self._run_locks.setdefault(run_id, threading.Lock())

    def ping(self) -> None:
        if not (self.root / "runs").is_dir():
            raise StoreUnreachable(f"store root {self.root} is not available")

    def _run_dir(self, run_id: str) -> Path:
        self.ping()
        # ids that are not 32-hex cannot name a run; also keeps paths inside the root
        if not is_valid_run_id(run_id):
            raise RunNotFound(f"no run {run_id!r}")
        run_dir = self.root / "runs" / run_id
        if not run_dir.is_dir():
            raise RunNotFound(f"no run {run_id!r}")
        return run_dir

    def _read_meta(self, run_dir: Path) -> dict:
        try:
            meta = json.loads((run_dir / "meta").read_text(encoding="utf-8"))
            RunStatus(meta["status"])
            if not isinstance(meta.get("params", {}), dict):
                raise TypeError("params")
            return meta
        except FileNotFoundError:
            if not (self.root / "runs").is_dir():
                raise StoreUnreachable(f"store root {self.root} vanished") from None
            raise StoreCorrupt(f"{run_dir.name}: meta file missing") from None
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise StoreCorrupt(f"{run_dir.name}: unreadable meta ({exc})") from None

    @staticmethod
    def _write_meta(run_dir: Path, meta: dict) -> None:
        tmp = run_dir / "meta.tmp"
        tmp.write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")
        os.replace(tmp, run_dir / "meta")

    def _read_metrics(self, run_dir: Path) -> dict[str, float]:
        metrics: dict[str, float] = {}
        metrics_dir = run_dir / "metrics"
        if not metrics_dir.is_dir():
            return metrics
        for path in sorted(metrics_dir.iterdir()):
            lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
            if not lines:
                continue
            try:
                metrics[path.name] = float(lines[-1])
            except ValueError:
                raise StoreCorrupt(f"{run_dir.name}: metric {path.name} is not numeric") from None
        return metrics

    def get_run(self, run_id: str) -> RunRecord:
        run_dir = self._run_dir(run_id)
        meta = self._read_meta(run_dir)
        return RunRecord(
            run_id=run_id,
            status=RunStatus(meta["status"]),
            metrics=self._read_metrics(run_dir),
            params=dict(meta.get("params", {})),
            artifact_root=str(run_dir / "artifacts"),
        )

    def list_artifacts(self, run_id, path=None, *, recursive=False):
        base = self._run_dir(run_id) / "artifacts"
        start = base / check_artifact_path(path.strip("/")) if path else base
        if not start.is_dir():
            return []
        try:
            if recursive:
                found = [p for p in start.rglob("*") if p.is_file()]
            else:
                found = list(start.iterdir())
            entries = [
                ArtifactEntry(p.relative_to(base).as_posix(), p.is_dir(), 0 if p.is_dir() else p.stat().st_size)
                for p in found
            ]
        except OSError as exc:
            raise StoreUnreachable(f"artifact listing failed for {run_id}: {exc}") from None
        return sorted(entries)

    def create_run(self) -> str:
        self.ping()
        while True:
            run_id = self._new_id()
            run_dir = self.root / "runs" / run_id
            try:
                run_dir.mkdir()
            except FileExistsError:
                continue
            except FileNotFoundError:
                raise StoreUnreachable(f"store root {self.root} vanished") from None
            self._write_meta(run_dir, {"status": RunStatus.RUNNING.value, "params": {}})
            return run_id

    def set_status(self, run_id, status):
        run_dir = self._run_dir(run_id)
        with self._lock_for(run_id):
            meta = self._read_meta(run_dir)
            record = RunRecord(run_id, RunStatus(meta["status"]))
            meta["status"] = self._next_status(record, status).value
            self._write_meta(run_dir, meta)

    def _running_dir(self, run_id: str, what: str) -> Path:
        run_dir = self._run_dir(run_id)
        meta = self._read_meta(run_dir)
        self._require_running(RunRecord(run_id, RunStatus(meta["status"])), what)
        return run_dir

    def log_metric(self, run_id, name, value):
        value = check_metric(name, value)
        with self._lock_for(run_id):
            run_dir = self._running_dir(run_id, "log a metric")
            (run_dir / "metrics").mkdir(exist_ok=True)
            with open(run_dir / "metrics" / name, "a", encoding="utf-8") as fh:
                fh.write(f"{value!r}\n")

    def log_param(self, run_id, name, value):
        with self._lock_for(run_id):
            run_dir = self._running_dir(run_id, "log a param")
            meta = self._read_meta(run_dir)
            meta.setdefault("params", {})[name] = str(value)
            self._write_meta(run_dir, meta)

    def log_artifact(self, run_id, path, data):
        check_artifact_path(path)
        with self._lock_for(run_id):
            run_dir = self._running_dir(run_id, "log an artifact")
            target = run_dir / "artifacts" / path
            try:
                target.parent.mkdir(parents=True, exist_ok=True)
                if target.is_dir():
                    raise IsADirectoryError(path)
                target.write_bytes(bytes(data))
            except (FileExistsError, NotADirectoryError, IsADirectoryError):
                raise ValueError(f"artifact path {path!r} clashes with an existing file or directory") from None
