import json
import math
import warnings
from pathlib import Path

import numpy as np
import pytest

from bdmpq import SimConfig, SimReport, build_ctmc, ci_halfwidth, load_model, parse_model, simulate, transient
from bdmpq.library import golden_model
from bdmpq.model import AND, EXP, ONDEMAND, Bdmp, Gate, Leaf, Trigger, model_to_dict
from bdmpq.montecarlo import _uniform_py, leaf_laws, trial_key

MODELS = Path(__file__).resolve().parent.parent / "models"


def _within(rep: SimReport, exact: float, sigmas: float = 4.0) -> bool:
    sd = math.sqrt(max(exact * (1 - exact), 1e-300) / rep.trials)
    return abs(rep.estimate - exact) <= sigmas * sd


def _det_only(duration: float) -> Bdmp:
    return Bdmp((Leaf("B", "det", duration=duration),), (), (), "B", {})


def test_det_leaf_certain_failure():
    assert simulate(_det_only(5.0), SimConfig(500, 10.0, seed=1)).estimate == 1.0
    assert simulate(_det_only(5.0), SimConfig(500, 4.0, seed=1)).estimate == 0.0


def test_ci_halfwidth_values():
    assert ci_halfwidth(0.0, 100) == 0.0
    assert ci_halfwidth(0.5, 10_000, 0.90) == pytest.approx(1.6448536 * 0.005, rel=1e-6)
    with pytest.raises(ValueError):
        ci_halfwidth(1.5, 10)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(0, 1.0)
    with pytest.raises(ValueError):
        SimConfig(10, 1.0, battery_policy="lazy")
    with pytest.raises(ValueError):
        SimConfig(10, 1.0, ci_level=1.0)


def test_uniform_stream():
    keys = [trial_key(42, i) for i in range(4)]
    assert len(set(keys)) == 4
    state = np.array([keys[0]], dtype=np.uint64)
    draws = [_uniform_py(state) for _ in range(1000)]
    assert all(0.0 < u < 1.0 for u in draws)
    assert abs(np.mean(draws) - 0.5) < 0.05


def test_same_seed_same_report_any_workers():
    model = golden_model(lam=0.01)
    ref = simulate(model, SimConfig(30_000, 1e3, seed=9, workers=1))
    for w in (2, 3):
        rep = simulate(model, SimConfig(30_000, 1e3, seed=9, workers=w))
        assert np.array_equal(rep.failure_times, ref.failure_times)
        assert rep.to_dict() == ref.to_dict()
    other = simulate(model, SimConfig(30_000, 1e3, seed=10, workers=1))
    assert not np.array_equal(other.failure_times, ref.failure_times)


def test_golden_unbiased():
    model = golden_model(lam=0.01)
    exact = transient(build_ctmc(model), 1e3).goal_probability
    rep = simulate(model, SimConfig(100_000, 1e3, seed=4))
    assert _within(rep, exact)
    assert rep.tallies[0][0] == ("S1", "S2", "S3")


def test_estimate_at_earlier_times():
    model = golden_model(lam=0.01)
    ctmc = build_ctmc(model)
    rep = simulate(model, SimConfig(100_000, 1e3, seed=5))
    for t in (100.0, 500.0):
        p = rep.estimate_at(t)
        sd = math.sqrt(p * (1 - p) / rep.trials)
        assert abs(p - transient(ctmc, t).goal_probability) <= 4 * sd + 1e-12


def test_erlang_and_ondemand_unbiased():
    model = load_model(MODELS / "supply_erlang.json")
    exact = transient(build_ctmc(model), 1e4).goal_probability
    assert _within(simulate(model, SimConfig(50_000, 1e4, seed=2)), exact)


def test_gamma_only():
    leaves = (Leaf("I", EXP, lambda_active=1e-3, initiator=True), Leaf("D", ONDEMAND, gamma=0.3))
    model = Bdmp(leaves, (Gate("TOP", AND, ("I", "D")),), (Trigger("I", "D"),), "TOP", {})
    exact = 0.3 * -math.expm1(-1e-3 * 1e3)
    rep = simulate(model, SimConfig(100_000, 1e3, seed=8))
    assert _within(rep, exact)
    assert rep.tallies[0][0] == ("I[D!]",)


def test_repair_group_matches_queue_chain():
    doc = model_to_dict(golden_model(lam=0.01, mu=0.05))
    doc["repair_groups"] = {"crew": ["S1", "S2", "S3"]}
    model = parse_model(json.dumps(doc))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        exact = transient(build_ctmc(model), 1e3).goal_probability
    assert _within(simulate(model, SimConfig(100_000, 1e3, seed=6)), exact)


def test_singleton_groups_change_nothing():
    base = golden_model(lam=0.01)
    doc = model_to_dict(base)
    doc["repair_groups"] = {"a": ["S1"], "b": ["S2"], "c": ["S3"]}
    grouped = parse_model(json.dumps(doc))
    cfg = SimConfig(20_000, 1e3, seed=3)
    assert np.array_equal(simulate(base, cfg).failure_times, simulate(grouped, cfg).failure_times)


def _drain_model() -> Bdmp:
    leaves = (Leaf("P", EXP, lambda_active=1.0, mu=1.0, initiator=True), Leaf("B", "det", duration=1.0))
    return Bdmp(leaves, (Gate("TOP", AND, ("P", "B")),), (Trigger("P", "B"),), "TOP", {})


def test_pessimistic_battery_drains_sooner():
    model = _drain_model()
    opt = simulate(model, SimConfig(5_000, 5.0, seed=1, battery_policy="optimistic"))
    pes = simulate(model, SimConfig(5_000, 5.0, seed=1, battery_policy="pessimistic"))
    # the battery never draws random numbers, so each trial's outage pattern is shared
    for t in np.linspace(0.5, 5.0, 10):
        assert pes.estimate_at(t) >= opt.estimate_at(t)
    assert pes.estimate > opt.estimate + 0.05


def test_optimistic_drain_is_single_outage():
    # optimistic: fails iff one outage of P outlasts the battery
    model = _drain_model()
    rep = simulate(model, SimConfig(2_000, 1e4, seed=2))
    assert rep.estimate == 1.0


def test_laws():
    laws = leaf_laws(load_model(MODELS / "supply_erlang.json"))
    assert laws["BATTERY"]["failure"].kind == "erlang"
    assert laws["BATTERY"]["failure"].mean() == pytest.approx(1.0)
    assert laws["GRID"]["repair"].mean() == pytest.approx(20.0)


def test_report_dict_is_json():
    rep = simulate(golden_model(lam=0.01), SimConfig(5_000, 1e3, seed=1))
    text = json.dumps(rep.to_dict(), allow_nan=False)
    assert json.loads(text)["trials"] == 5_000
