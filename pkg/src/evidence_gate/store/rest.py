"""Client for an experiment tracker speaking the MLflow REST API (2.0).

Only the endpoints the gates need are used: ``runs/get``, ``artifacts/list``
and the basic run-logging calls. Artifact upload goes through the tracking
server's artifact proxy (``mlflow-artifacts``), so the server must be started
with proxied artifact storage.
"""

from __future__ import annotations

import json
import time
import urllib.error
import urllib.parse
import urllib.request
from typing import Any, Callable

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
)

# (method, url, body, headers) -> (http status, response body)
Transport = Callable[[str, str, "bytes | None", dict], "tuple[int, bytes]"]


def urllib_transport(method: str, url: str, body: bytes | None, headers: dict, timeout: float = 10.0) -> tuple[int, bytes]:
    request = urllib.request.Request(url, data=body, method=method, headers=headers)
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


class RestStore(TrackingStore):
    def __init__(self, base_url: str, *, experiment_id: str = "0", transport: Transport | None = None):
        self.base_url = base_url.rstrip("/")
        self.experiment_id = experiment_id
        self._transport = transport or urllib_transport

    def _call(self, method: str, endpoint: str, *, query: dict | None = None, payload: Any = None,
              raw: bytes | None = None, api: str = "api/2.0/mlflow") -> dict:
        url = f"{self.base_url}/{api}/{endpoint}"
        if query:
            url += "?" + urllib.parse.urlencode(query)
        headers = {}
        body = raw
        if payload is not None:
            body = json.dumps(payload).encode("utf-8")
            headers["Content-Type"] = "application/json"
        try:
            status, data = self._transport(method, url, body, headers)
        except (OSError, urllib.error.URLError) as exc:
            raise StoreUnreachable(f"{method} {endpoint}: {exc}") from None
        try:
            decoded = json.loads(data or b"{}")
        except ValueError:
            decoded = {}
        if status == 404 or decoded.get("error_code") == "RESOURCE_DOES_NOT_EXIST":
            raise RunNotFound(decoded.get("message", f"{endpoint} returned {status}"))
        if status >= 500:
            raise StoreUnreachable(f"{endpoint} returned {status}")
        if status >= 400:
            raise StoreCorrupt(f"{endpoint} returned {status}: {decoded.get('message', '')}")
        return decoded

    def ping(self) -> None:
        self._call("GET", "experiments/get", query={"experiment_id": self.experiment_id})

    def get_run(self, run_id: str) -> RunRecord:
        run = self._call("GET", "runs/get", query={"run_id": run_id}).get("run")
        if not run:
            raise RunNotFound(f"no run {run_id!r}")
        try:
            info, data = run["info"], run.get("data", {})
            return RunRecord(
                run_id=info["run_id"],
                status=RunStatus(info["status"]),
                metrics={m["key"]: float(m["value"]) for m in data.get("metrics", [])},
                params={p["key"]: p["value"] for p in data.get("params", [])},
                artifact_root=info.get("artifact_uri", ""),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise StoreCorrupt(f"malformed run payload for {run_id}: {exc}") from None

    def _list(self, run_id: str, path: str | None) -> list[ArtifactEntry]:
        query = {"run_id": run_id}
        if path:
            query["path"] = path
        files = self._call("GET", "artifacts/list", query=query).get("files", [])
        return [ArtifactEntry(f["path"], bool(f.get("is_dir")), int(f.get("file_size", 0) or 0)) for f in files]

    def list_artifacts(self, run_id, path=None, *, recursive=False):
        entries = self._list(run_id, path.strip("/") if path else None)
        if not recursive:
            return sorted(entries)
        files: list[ArtifactEntry] = []
        pending = entries
        while pending:
            entry = pending.pop()
            if entry.is_directory:
                pending.extend(self._list(run_id, entry.path))
            else:
                files.append(entry)
        return sorted(files)

    def create_run(self) -> str:
        payload = {"experiment_id": self.experiment_id, "start_time": int(time.time() * 1000)}
        return self._call("POST", "runs/create", payload=payload)["run"]["info"]["run_id"]

    def set_status(self, run_id, status):
        target = self._next_status(self.get_run(run_id), status)
        payload = {"run_id": run_id, "status": target.value}
        if target.terminal:
            payload["end_time"] = int(time.time() * 1000)
        self._call("POST", "runs/update", payload=payload)

    def log_metric(self, run_id, name, value):
        value = check_metric(name, value)
        self._require_running(self.get_run(run_id), "log a metric")
        payload = {"run_id": run_id, "key": name, "value": value, "timestamp": int(time.time() * 1000), "step": 0}
        self._call("POST", "runs/log-metric", payload=payload)

    def log_param(self, run_id, name, value):
        self._require_running(self.get_run(run_id), "log a param")
        self._call("POST", "runs/log-parameter", payload={"run_id": run_id, "key": name, "value": str(value)})

    def log_artifact(self, run_id, path, data):
        check_artifact_path(path)
        self._require_running(self.get_run(run_id), "log an artifact")
        endpoint = f"{self.experiment_id}/{run_id}/artifacts/{urllib.parse.quote(path)}"
        self._call("PUT", endpoint, raw=bytes(data), api="api/2.0/mlflow-artifacts/artifacts")

    def run_url(self, run_id: str) -> str:
        return f"{self.base_url}/#/experiments/{self.experiment_id}/runs/{run_id}"
