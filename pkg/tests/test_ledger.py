from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings

from evidence_gate.approval import ApprovalDecision, Outcome
from evidence_gate.ledger import (
    AuditVerdict,
    ClaimsLedgerEntry,
    EmptyLedger,
    Evidence,
    LedgerStatus,
    MalformedLedger,
    audit_ledger,
    dump_entry,
    dumps_ledger,
    emit_ledger,
    load_entry,
    load_ledger,
    loads_ledger,
    utc_timestamp,
    write_audit_report,
)
from evidence_gate.schemas import AUDIT_REPORT_SCHEMA, check
from evidence_gate.store import MemoryStore, StoreUnreachable

from conftest import EXAMPLE_LEDGER_ENTRY
from strategies import ledger_entries, ledgers

TS = "2025-10-23T14:32:18Z"
S = LedgerStatus


def test_example_entry_round_trips_byte_identical():
    entry = load_entry(EXAMPLE_LEDGER_ENTRY)
    assert entry.status is S.VERIFIED_SUCCESS
    assert entry.evidence.metrics == {"val_loss": 1.234, "epochs_completed": 3}
    assert dump_entry(entry) == EXAMPLE_LEDGER_ENTRY


def test_empty_ledger_file(tmp_path):
    path = emit_ledger([], tmp_path / "ledger.json")
    assert path.read_text() == "[]\n"
    assert load_ledger(path) == []


def test_verified_without_run_id_rejected():
    data = json.loads(EXAMPLE_LEDGER_ENTRY)
    del data["run_id"]
    with pytest.raises(MalformedLedger):
        load_entry(json.dumps(data))
    with pytest.raises(MalformedLedger):
        loads_ledger(json.dumps([data]))


def test_constructor_invariants():
    with pytest.raises(MalformedLedger):
        ClaimsLedgerEntry("T01", S.VERIFIED_SUCCESS, TS, run_id="a" * 32, evidence=Evidence(None))
    with pytest.raises(MalformedLedger):
        ClaimsLedgerEntry("T01", S.BLOCKED_AT_APPROVAL, TS, run_id="a" * 32)
    with pytest.raises(MalformedLedger):
        ClaimsLedgerEntry("T01", S.HALTED, "2025-10-23 14:32:18")
    with pytest.raises(MalformedLedger):
        ClaimsLedgerEntry("", S.HALTED, TS)


@pytest.mark.parametrize(
    "text",
    ["", "{", '{"a": 1}', '[{"task_id": "T01"}]', '[{"task_id": "T01", "status": "MAYBE", "verification_timestamp": "2025-10-23T14:32:18Z"}]'],
)
def test_malformed_ledgers(text):
    with pytest.raises(MalformedLedger):
        loads_ledger(text)


def test_unknown_keys_rejected():
    data = json.loads(EXAMPLE_LEDGER_ENTRY)
    data["note"] = "x"
    with pytest.raises(MalformedLedger):
        load_entry(json.dumps(data))


def test_duplicate_tasks_rejected():
    entry = json.loads(EXAMPLE_LEDGER_ENTRY)
    with pytest.raises(MalformedLedger):
        loads_ledger(json.dumps([entry, entry]))


def test_entries_sorted_on_emit():
    entries = [ClaimsLedgerEntry(t, S.HALTED, TS) for t in ("T09", "T01", "T04")]
    assert [e.task_id for e in loads_ledger(dumps_ledger(entries))] == ["T01", "T04", "T09"]


def test_utc_timestamp():
    plus2 = timezone(timedelta(hours=2))
    assert utc_timestamp(datetime(2025, 10, 23, 16, 32, 18, 999, tzinfo=plus2)) == TS
    assert utc_timestamp(datetime(2025, 10, 23, 14, 32, 18)) == TS


@settings(max_examples=200)
@given(ledger_entries())
def test_entry_round_trip(entry):
    text = dump_entry(entry)
    again = load_entry(text)
    assert again == entry
    assert dump_entry(again) == text


@settings(max_examples=100)
@given(ledgers())
def test_ledger_round_trip(entries):
    text = dumps_ledger(entries)
    assert dumps_ledger(loads_ledger(text)) == text
    assert sorted(entries, key=lambda e: e.task_id) == loads_ledger(text)


# --------------------------------------------------------------------------
# audit


def _verified_run(store, artifacts=("model.pt",), metrics=None):
    run_id = store.create_run()
    for name, v in (metrics or {"val_loss": 1.234}).items():
        store.log_metric(run_id, name, v)
    for a in artifacts:
        store.log_artifact(run_id, a, b"x")
    store.set_status(run_id, "FINISHED")
    return run_id


def _claim(task, run_id, artifacts=("model.pt",), metrics=None, status=S.VERIFIED_SUCCESS, approval=None):
    ev = Evidence(f"runs/{run_id}", metrics if metrics is not None else {"val_loss": 1.234}, tuple(artifacts))
    return ClaimsLedgerEntry(task, status, TS, run_id=run_id, evidence=ev, approval=approval)


def test_audit_verified_and_deleted_run():
    store = MemoryStore()
    a, b = _verified_run(store), _verified_run(store)
    entries = [_claim("T01", a), _claim("T02", b)]
    assert audit_ledger(entries, store).hallucinated == 0
    store.delete_run(b)
    report = audit_ledger(entries, store)
    assert report.verdicts == {"T01": AuditVerdict.VERIFIED, "T02": AuditVerdict.HALLUCINATED}
    assert report.summary_line() == "hallucination_rate: 0.500 (1/2)"


def test_audit_catches_metric_mismatch_and_missing_artifact():
    store = MemoryStore()
    run_id = _verified_run(store)
    assert audit_ledger([_claim("T01", run_id, metrics={"val_loss": 1.0})], store).hallucinated == 1
    assert audit_ledger([_claim("T01", run_id, artifacts=("gone.pt",))], store).hallucinated == 1


def test_audit_blocked_and_failed_entries():
    store = MemoryStore()
    run_id = _verified_run(store)
    approved = ApprovalDecision(Outcome.APPROVED)
    entries = [
        ClaimsLedgerEntry("T13", S.BLOCKED_AT_APPROVAL, TS),
        ClaimsLedgerEntry("T20", S.EXECUTION_FAILED, TS),
        _claim("T21", "f" * 32, status=S.VERIFICATION_FAILED, approval=approved),
        _claim("T22", "f" * 32, status=S.VERIFICATION_FAILED),
        _claim("T23", run_id, status=S.VERIFICATION_FAILED),
    ]
    report = audit_ledger(entries, store)
    assert report.verdicts == {
        "T13": AuditVerdict.BLOCKED,
        "T20": AuditVerdict.FAILED,
        "T21": AuditVerdict.FAILED,
        "T22": AuditVerdict.HALLUCINATED,
        "T23": AuditVerdict.FAILED,
    }
    assert report.total == 5 and report.rate == pytest.approx(0.2)


def test_audit_empty_and_unreachable():
    with pytest.raises(EmptyLedger):
        audit_ledger([], MemoryStore())
    store = MemoryStore()
    store.unreachable = True
    with pytest.raises(StoreUnreachable):
        audit_ledger([ClaimsLedgerEntry("T01", S.HALTED, TS)], store)


def test_audit_report_file(tmp_path):
    store = MemoryStore()
    report = audit_ledger([_claim("T01", _verified_run(store))], store)
    path = write_audit_report(report, tmp_path / "audit.json")
    data = json.loads(path.read_text())
    check(data, AUDIT_REPORT_SCHEMA)
    assert data["tasks"] == [{"task_id": "T01", "verdict": "VERIFIED", "detail": "all checks passed"}]
