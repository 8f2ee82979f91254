from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evidence_gate.approval import (
    PANEL,
    ApprovalDecision,
    GateConfig,
    Outcome,
    ReviewerId,
    ReviewerVerdict,
    WrongPanelSize,
    approve,
    evaluate_consensus,
)
from evidence_gate.bench import canonical_fixtures
from evidence_gate.contract import CheckId, parse_contract

from conftest import EXAMPLE_CONTRACT

OPS, QSM, INFRA = PANEL


def panel(*votes):
    return [
        ReviewerVerdict(r, ok, conf, "" if ok else "objection")
        for r, (conf, ok) in zip(PANEL, votes)
    ]


def test_unanimous_high_confidence():
    d = evaluate_consensus(panel((0.9, True), (0.8, True), (0.75, True)), GateConfig())
    assert d.outcome is Outcome.APPROVED and d.approved
    assert d.failing_reviewers == () and d.violations == ()


def test_hard_veto():
    d = evaluate_consensus(panel((0.9, True), (0.4, False), (0.9, True)), GateConfig())
    assert d.outcome is Outcome.HARD_VETO
    assert d.failing_reviewers == (QSM,)


def test_below_tau_rejected():
    d = evaluate_consensus(panel((0.9, True), (0.65, True), (0.9, True)), GateConfig())
    assert d.outcome is Outcome.REJECTED
    assert d.failing_reviewers == (QSM,)


def test_low_confidence_approval_is_not_a_veto():
    d = evaluate_consensus(panel((0.9, True), (0.1, True), (0.9, True)), GateConfig())
    assert d.outcome is Outcome.REJECTED


def test_panel_order_does_not_matter():
    votes = panel((0.9, True), (0.65, True), (0.3, False))
    assert evaluate_consensus(votes[::-1], GateConfig()) == evaluate_consensus(votes, GateConfig())


@pytest.mark.parametrize("size", [0, 2, 4])
def test_wrong_panel_size(size):
    votes = (panel((0.9, True), (0.9, True), (0.9, True)) * 2)[:size]
    with pytest.raises(WrongPanelSize):
        evaluate_consensus(votes, GateConfig())


def test_duplicate_reviewer():
    votes = [ReviewerVerdict(OPS, True, 0.9)] * 3
    with pytest.raises(WrongPanelSize):
        evaluate_consensus(votes, GateConfig())


def test_verdict_invariants():
    with pytest.raises(ValueError):
        ReviewerVerdict(OPS, True, 1.2)
    with pytest.raises(ValueError):
        ReviewerVerdict(OPS, False, 0.9, "  ")
    assert ReviewerVerdict("OpsCommander", True, 0.9).reviewer_id is ReviewerId.OPS_COMMANDER


def test_gate_config_invariants():
    with pytest.raises(ValueError):
        GateConfig(tau=0.5, hard_veto_threshold=0.5)
    with pytest.raises(ValueError):
        GateConfig(tau=1.5)


def test_approve_example(example_bytes):
    d = approve(parse_contract(example_bytes), panel((0.9, True), (0.9, True), (0.9, True)))
    assert d.approved


def test_placeholder_short_circuits_panel(example_doc):
    example_doc["acceptance_criteria"]["run_id"] = "<to_be_generated>"
    c = parse_contract(json.dumps(example_doc))
    # a malformed panel would raise if it were consulted
    d = approve(c, [])
    assert d.outcome is Outcome.REJECTED
    assert [v.check_id for v in d.violations] == [CheckId.PLACEHOLDER]


def test_t13_contract_is_rejected():
    c = canonical_fixtures()["T13"].contract
    d = approve(c, panel((1.0, True), (1.0, True), (1.0, True)))
    assert d.outcome is Outcome.REJECTED
    assert any(v.check_id is CheckId.PLACEHOLDER for v in d.violations)


def test_decision_dict_round_trip():
    d = evaluate_consensus(panel((0.9, True), (0.4, False), (0.6, True)), GateConfig())
    assert ApprovalDecision.from_dict(d.to_dict()) == d


_conf = st.floats(0, 1)
_vote = st.tuples(_conf, st.booleans())


@given(_vote, _vote, _vote, st.integers(0, 2), st.floats(0, 1))
def test_monotone_in_confidence(a, b, c, who, bump):
    votes = [a, b, c]
    before = evaluate_consensus(panel(*votes), GateConfig())
    conf, ok = votes[who]
    if not ok:
        return
    votes[who] = (max(conf, bump), ok)
    after = evaluate_consensus(panel(*votes), GateConfig())
    if before.approved:
        assert after.approved


@given(_vote, _vote, _vote)
def test_totality(a, b, c):
    d = evaluate_consensus(panel(a, b, c), GateConfig())
    assert d.outcome in set(Outcome)
    assert d.approved == (d.failing_reviewers == ())


@given(_vote, _vote, _vote, st.sampled_from(["TBD", "<x>", ""]))
def test_schema_short_circuit(a, b, c, bad):
    doc = json.loads(json.dumps(EXAMPLE_CONTRACT))
    doc["acceptance_criteria"]["run_id"] = bad
    d = approve(parse_contract(json.dumps(doc)), panel(a, b, c))
    assert not d.approved


def test_failing_reviewers_listed_in_panel_order():
    grid = [0.0, 0.69, 0.7, 1.0]
    for confs in itertools.product(grid, repeat=3):
        d = evaluate_consensus(panel(*[(x, True) for x in confs]), GateConfig())
        assert d.failing_reviewers == tuple(r for r, x in zip(PANEL, confs) if x < 0.7)
