from __future__ import annotations

import copy
import json
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

# schema validation makes some examples slow; timing is not what these tests check
settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# the acceptance contract shown as valid in the original write-up
EXAMPLE_CONTRACT = {
    "task_id": "T01",
    "description": "Train CLIP model on subset data",
    "acceptance_criteria": {
        "run_id": "example-run-id-12345",
        "metrics": {
            "val_loss": {"type": "float", "range": [0, 5]},
            "epochs_completed": {"type": "int", "min": 1},
        },
        "artifacts": ["model.pt", "metrics.json", "training.log"],
        "status": "FINISHED",
    },
}

EXAMPLE_LEDGER_ENTRY = """{
  "task_id": "T04",
  "status": "VERIFIED_SUCCESS",
  "run_id": "a3f8b2c1d4e5f6a7b8c9d0e1f2a3b4c5",
  "evidence": {
    "mlflow_url": "http://localhost:5000/#/experiments/1/runs/a3f8...",
    "metrics": {"val_loss": 1.234, "epochs_completed": 3},
    "artifacts": ["model.pt", "metrics.json", "training.log"]
  },
  "verification_timestamp": "2025-10-23T14:32:18Z"
}"""


@pytest.fixture
def example_doc() -> dict:
    return copy.deepcopy(EXAMPLE_CONTRACT)


@pytest.fixture
def example_bytes() -> bytes:
    return json.dumps(EXAMPLE_CONTRACT).encode()


# one PASS/FAIL line per acceptance criterion, collected by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
