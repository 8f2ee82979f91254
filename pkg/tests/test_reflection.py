from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evidence_gate.bench import canonical_fixtures
from evidence_gate.reflection import (
    Decision,
    Patch,
    PatchAction,
    PatchLedger,
    PatchRecord,
    PolicyRecommendation,
    Rule,
    Rulebook,
    apply_contract_patch,
    default_rulebook,
    generate_patch,
    should_apply,
)
from evidence_gate.schemas import PATCH_RECORD_SCHEMA, check
from evidence_gate.verification import FailureClass, RoutingTarget

F, R = FailureClass, RoutingTarget


def test_metric_missing_simplifies_contract():
    patch, rec = generate_patch(F.METRIC_MISSING, "T06", default_rulebook())
    assert patch.action is PatchAction.SIMPLIFY_CONTRACT
    assert patch.target_phase is R.PHASE_4_5
    assert rec.decision is Decision.RETRY


def test_placeholder_run_id_concretized():
    patch, rec = generate_patch(F.RUN_NOT_QUERYABLE, "T09", default_rulebook(), R.PHASE_4_5)
    assert patch.action is PatchAction.CONCRETIZE_RUN_ID
    assert rec.decision is Decision.RETRY
    assert patch.provenance == "rulebook:RunNotQueryable/Phase4_5"


def test_missing_run_after_execution_relogs():
    patch, _ = generate_patch(F.RUN_NOT_QUERYABLE, "T09", default_rulebook())
    assert patch.action is PatchAction.RELOG_EVIDENCE
    assert patch.target_phase is R.PHASE_6_5


@pytest.mark.parametrize(
    "failure,action",
    [
        (F.ARTIFACT_MISSING, PatchAction.RELOG_EVIDENCE),
        (F.ARTIFACT_LISTING_FAILED, PatchAction.RELOG_EVIDENCE),
        (F.NOT_FINISHED, PatchAction.REPAIR_RUNTIME),
        (F.METRIC_OUT_OF_RANGE, PatchAction.SIMPLIFY_CONTRACT),
    ],
)
def test_default_actions(failure, action):
    assert generate_patch(failure, "T", default_rulebook())[0].action is action


def test_unreachable_aborts():
    patch, rec = generate_patch(F.TRACKER_UNREACHABLE, "T01", default_rulebook())
    assert patch.action is PatchAction.NO_OP
    assert rec.decision is Decision.ABORT
    assert patch.target_phase is R.HALT


def test_default_rule_is_total():
    empty = Rulebook({}, Rule(PatchAction.NO_OP, 0.0, Decision.ESCALATE, 0.9))
    for failure in F:
        patch, rec = generate_patch(failure, "T", empty)
        assert patch.provenance == "rulebook:default"
        assert rec.decision is Decision.ESCALATE


def test_lookup_precedence():
    rb = Rulebook(
        {
            (F.ARTIFACT_MISSING, None, None): Rule(PatchAction.RELOG_EVIDENCE, 0.1, Decision.RETRY, 0.1),
            (F.ARTIFACT_MISSING, None, R.PHASE_6_5): Rule(PatchAction.RELOG_EVIDENCE, 0.2, Decision.RETRY, 0.1),
            (F.ARTIFACT_MISSING, "T1", None): Rule(PatchAction.RELOG_EVIDENCE, 0.3, Decision.RETRY, 0.1),
            (F.ARTIFACT_MISSING, "T1", R.PHASE_6_5): Rule(PatchAction.RELOG_EVIDENCE, 0.4, Decision.RETRY, 0.1),
        },
        Rule(PatchAction.NO_OP, 0.0, Decision.ESCALATE, 0.9),
    )
    assert rb.lookup(F.ARTIFACT_MISSING, "T1")[1].confidence == 0.4
    assert rb.lookup(F.ARTIFACT_MISSING, "T1", R.PHASE_4_5)[1].confidence == 0.3
    assert rb.lookup(F.ARTIFACT_MISSING, "T2")[1].confidence == 0.2
    assert rb.lookup(F.ARTIFACT_MISSING, "T2", R.PHASE_4_5)[1].confidence == 0.1
    assert rb.lookup(F.ARTIFACT_MISSING, "T1")[0] == "ArtifactMissing@T1/Phase6_5"


def test_rulebook_file_round_trip(tmp_path):
    rb = default_rulebook().with_rules(
        {(F.METRIC_MISSING, "T06", R.PHASE_4_5): Rule(PatchAction.SIMPLIFY_CONTRACT, 0.85, Decision.RETRY, 0.2,
                                                     R.PHASE_4_5, {"drop_metrics": ["a"]})}
    )
    path = tmp_path / "rules.json"
    path.write_text(json.dumps(rb.to_dict()))
    again = Rulebook.load(path)
    assert again.to_dict() == rb.to_dict()
    assert again.rules == rb.rules


@pytest.mark.parametrize("conf,expected", [(0.75, True), (0.65, False), (0.7, True)])
def test_should_apply(conf, expected):
    patch = Patch("p", R.PHASE_6_5, PatchAction.RELOG_EVIDENCE, conf, "test")
    assert should_apply(patch, 0.7) is expected


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_should_apply_monotone(a, b, tau):
    lo, hi = sorted((a, b))
    p = lambda c: Patch("p", R.PHASE_6_5, PatchAction.NO_OP, c, "test")  # noqa: E731
    assert should_apply(p(lo), tau) <= should_apply(p(hi), tau)


@given(st.sampled_from(list(F)), st.sampled_from(["T01", "T06", "X"]), st.none() | st.sampled_from(list(R)))
def test_generate_patch_is_pure(failure, task, phase):
    rb = default_rulebook()
    assert generate_patch(failure, task, rb, phase) == generate_patch(failure, task, rb, phase)


def test_patch_invariants():
    with pytest.raises(ValueError):
        Patch("p", R.HALT, PatchAction.NO_OP, 1.1, "x")
    with pytest.raises(ValueError):
        Patch("p", R.HALT, PatchAction.NO_OP, 0.5, "")
    with pytest.raises(ValueError):
        PolicyRecommendation(Decision.RETRY, -0.1)


def test_simplify_drops_listed_metrics():
    c = canonical_fixtures()["T06"].contract
    patch, _ = generate_patch(F.METRIC_MISSING, "T06", Rulebook.from_dict(_t06_rules()))
    simpler = apply_contract_patch(c, patch)
    assert len(c.metrics) == 8 and len(simpler.metrics) == 5
    assert set(simpler.required_metrics or {}) <= set(simpler.metrics)


def _t06_rules():
    return {
        "rules": [{"failure": "MetricMissing", "task_id": "T06", "action": "SimplifyContract", "confidence": 0.85,
                   "edits": {"drop_metrics": ["recall_at_1", "recall_at_5", "grad_norm"]}}],
        "default": {"action": "NoOp", "confidence": 0.0, "decision": "ESCALATE"},
    }


def test_simplify_falls_back_to_subject():
    c = canonical_fixtures()["T04"].contract
    patch = Patch("p", R.PHASE_4_5, PatchAction.SIMPLIFY_CONTRACT, 0.9, "x")
    assert "val_loss" not in apply_contract_patch(c, patch, "val_loss").metrics
    assert apply_contract_patch(c, patch) == c


def test_concretize_defers_run_id():
    c = canonical_fixtures()["T09"].contract
    patch = Patch("p", R.PHASE_4_5, PatchAction.CONCRETIZE_RUN_ID, 0.9, "x")
    out = apply_contract_patch(c, patch)
    assert out.run_id is None and out.run_id_deferred


def test_patch_ledger_files(tmp_path):
    ledger = PatchLedger()
    for attempt, risk in ((1, 0.3), (2, 0.2)):
        patch, _ = generate_patch(F.ARTIFACT_MISSING, "T04", default_rulebook())
        ledger.add(PatchRecord("T04", attempt, "Phase6_5", F.ARTIFACT_MISSING, patch,
                               PolicyRecommendation(Decision.RETRY, risk), True, "passed"))
    ledger.write(tmp_path)
    files = sorted(p.name for p in (tmp_path / "patches").iterdir())
    assert files == ["T04-1.json", "T04-2.json"]
    for name in files:
        check(json.loads((tmp_path / "patches" / name).read_text()), PATCH_RECORD_SCHEMA)
    assert json.loads((tmp_path / "risk_scores.json").read_text()) == {"T04": 0.2}
