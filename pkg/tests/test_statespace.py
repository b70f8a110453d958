import json
import math
import time

import numpy as np
import pytest

from bdmpq import build_ctmc, enumerate_transitions, export_ctmc, import_ctmc, initial_state, transient
from bdmpq.library import golden_model, standby_chain
from bdmpq.model import AND, EXP, ONDEMAND, OR, PAND, Bdmp, Gate, Leaf, ModelError, Trigger, model_to_dict, parse_model
from bdmpq.statespace import StateSpaceOverflow, activation, structure_value

from corpus import spare_chain_model, standby_model

L1, L2, L3, M1, M2, M3 = 1e-3, 2e-3, 3e-3, 0.1, 0.2, 0.3


def _distinct_golden() -> Bdmp:
    doc = model_to_dict(golden_model())
    for leaf, lam, mu in zip(doc["leaves"], (L1, L2, L3), (M1, M2, M3)):
        leaf["lambda_active"], leaf["mu"] = lam, mu
    return parse_model(json.dumps(doc))


def test_golden_structure():
    t0 = time.perf_counter()
    ctmc = build_ctmc(_distinct_golden())
    assert time.perf_counter() - t0 < 1.0
    assert ctmc.n_states == 5 and ctmc.n_transitions == 8
    assert ctmc.names == ["S1*,S2,S3", "~S1,S2*,S3", "~S1,~S2,S3*", "S1*,~S2,S3", "fail"]
    edges = {(t.src, t.dst, t.label.token()): t.rate for t in ctmc.transitions}
    assert edges == {
        (0, 1, "S1/failure"): L1,
        (1, 0, "S1/repair"): M1,
        (1, 2, "S2/failure"): L2,
        (2, 3, "S1/repair"): M1,
        (2, 1, "S2/repair"): M2,
        (2, 4, "S3/failure"): L3,
        (3, 2, "S1/failure"): L1,
        (3, 0, "S2/repair"): M2,
    }
    # exit rates written out per state
    assert ctmc.rate_out == pytest.approx([L1, M1 + L2, M2 + M1 + L3, L1 + M2, 0.0], rel=1e-15)
    assert ctmc.goal == frozenset({4})


def test_golden_repair_deactivates_backup():
    model = golden_model()
    ctmc = build_ctmc(model)
    state = ctmc.states[2]  # S1 and S2 down, S3 running
    act = activation(model, state)
    assert act["S3"] and act["BACKUP"]
    after = {lab.token(): nxt for _, nxt, lab in enumerate_transitions(model, state)}
    assert not activation(model, after["S1/repair"])["S3"]


def test_goal_states_are_absorbing():
    model = golden_model()
    goal = build_ctmc(model, merge_goals=False)
    for s in goal.goal:
        assert structure_value(model, goal.states[s])[model.top]
        with pytest.raises(ValueError):
            enumerate_transitions(model, goal.states[s])
    assert all(t.src not in goal.goal for t in goal.transitions)


def _expected_exit_rate(model: Bdmp, state) -> float:
    act = activation(model, state)
    total = 0.0
    for i, leaf in enumerate(model.leaves):
        if state.failed[i]:
            total += leaf.mu
        elif leaf.kind == EXP:
            total += leaf.lambda_active if act[leaf.id] else leaf.lambda_standby
    return total


@pytest.mark.parametrize("seed", range(15))
def test_exit_rates_match_activation(seed):
    rng = np.random.default_rng(seed)
    model = (standby_model if seed % 2 else spare_chain_model)(rng)
    ctmc = build_ctmc(model, merge_goals=False)
    rates = ctmc.rate_out
    for s, state in enumerate(ctmc.states):
        if s in ctmc.goal:
            continue
        assert rates[s] == pytest.approx(_expected_exit_rate(model, state), rel=1e-12)


def test_ondemand_outcomes_split_the_rate():
    leaves = (
        Leaf("I", EXP, lambda_active=1e-3, mu=0.1, initiator=True),
        Leaf("D", ONDEMAND, gamma=0.25, mu=0.5),
    )
    model = Bdmp(leaves, (Gate("TOP", AND, ("I", "D")),), (Trigger("I", "D"),), "TOP", {})
    ctmc = build_ctmc(model)
    first = {t.label.token(): t.rate for t in ctmc.transitions if t.src == 0}
    assert first == {"I/failure{D=W:0.75}": pytest.approx(0.75e-3), "I/failure{D=F:0.25}": pytest.approx(0.25e-3)}
    # a failed demand goes straight to the goal
    ctmc_goal = [t for t in ctmc.transitions if t.dst in ctmc.goal]
    assert any(t.label.demand_outcomes for t in ctmc_goal)


def test_pand_needs_order():
    leaves = (Leaf("A", EXP, lambda_active=1.0), Leaf("B", EXP, lambda_active=2.0))
    model = Bdmp(leaves, (Gate("P", PAND, ("A", "B")),), (), "P", {})
    # P(A < B <= t) = int_0^t 2 e^{-2b} (1 - e^{-b}) db
    t = 0.7
    exact = (1 - math.exp(-2 * t)) - 2 / 3 * (1 - math.exp(-3 * t))
    assert transient(build_ctmc(model), t).goal_probability == pytest.approx(exact, abs=1e-10)


def test_filtering_preserves_nonrepairable_unreliability():
    leaves = tuple(Leaf(n, EXP, lambda_active=r) for n, r in zip("ABCD", (1e-3, 2e-3, 5e-4, 1e-3)))
    gates = (Gate("TOP", AND, ("G", "H")), Gate("G", OR, ("A", "B")), Gate("H", OR, ("C", "D")))
    model = Bdmp(leaves, gates, (), "TOP", {})
    full, filt = build_ctmc(model), build_ctmc(model, filtering=True)
    assert filt.n_states < full.n_states
    for t in (10.0, 1e3):
        assert transient(filt, t).goal_probability == pytest.approx(transient(full, t).goal_probability, abs=1e-12)


def test_filtering_off_by_default():
    model = golden_model()
    assert build_ctmc(model).same_as(build_ctmc(model, filtering=False))


def test_overflow():
    with pytest.raises(StateSpaceOverflow):
        build_ctmc(standby_chain(8, mu=0.1, ordered=False), max_states=10)


def test_initial_state_all_working():
    model = standby_chain(4)
    st = initial_state(model)
    assert not any(st.failed)


def test_deterministic_build_and_roundtrip():
    model = _distinct_golden()
    a, b = build_ctmc(model), build_ctmc(model)
    assert a.same_as(b)
    text = export_ctmc(a)
    assert export_ctmc(import_ctmc(text)) == text
    back = import_ctmc(text)
    assert np.array_equal(back.rate_out, a.rate_out)


def test_det_leaf_rejected():
    leaves = (Leaf("A", EXP, lambda_active=1e-3, initiator=True), Leaf("B", "det", lambda_active=0.0, duration=5.0))
    model = Bdmp(leaves, (Gate("TOP", AND, ("A", "B")),), (Trigger("A", "B"),), "TOP", {})
    with pytest.raises(ModelError, match="erlang"):
        build_ctmc(model)
