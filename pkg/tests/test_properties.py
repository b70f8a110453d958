"""Property-based checks of the invariants each engine promises."""
import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from bdmpq import (
    CutoffCriteria,
    CutSet,
    InFunctionBarrier,
    Initiator,
    OnDemandBarrier,
    SimConfig,
    build_ctmc,
    ci_halfwidth,
    dump_model,
    explore_nri,
    explore_ns,
    export_ctmc,
    import_ctmc,
    iab_cutset_rate,
    mcs_bdd_probability,
    mcs_bounds,
    mocus_mcs,
    parse_model,
    simulate,
    transient,
    uniformize,
)
from bdmpq.cutsets import evaluate, literals, minimal_true_points
from bdmpq.library import golden_model

from corpus import random_chain, random_formula, spare_chain_model, standby_model

seeds = st.integers(0, 2**32 - 1)
rate = st.floats(1e-5, 1.0)
prob = st.floats(0.0, 1.0)
FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@FAST
@given(seeds, st.integers(2, 25))
def test_uniformized_rows_stochastic(seed, n):
    ctmc = random_chain(np.random.default_rng(seed), n)
    sums = np.asarray(uniformize(ctmc).pbar.sum(axis=1)).ravel()
    assert np.all(np.abs(sums - 1.0) <= 1e-12)


@FAST
@given(seeds, st.integers(2, 20), st.lists(st.floats(0.0, 50.0), min_size=2, max_size=5))
def test_unreliability_is_a_monotone_probability(seed, n, times):
    ctmc = random_chain(np.random.default_rng(seed), n)
    values = [transient(ctmc, t).goal_probability for t in sorted(times)]
    assert all(-1e-12 <= v <= 1 + 1e-12 for v in values)
    assert all(b >= a - 1e-10 for a, b in zip(values, values[1:]))


@FAST
@given(seeds, st.integers(2, 8), st.floats(0.1, 20.0))
def test_ns_brackets_transient(seed, n, t):
    ctmc = random_chain(np.random.default_rng(seed), n, density=0.4)
    exact = transient(ctmc, t, 1e-13).goal_probability
    rep = explore_ns(ctmc, t, CutoffCriteria(min_prob=1e-5), max_expansions=20_000)
    assert rep.lower - 1e-12 <= exact <= rep.upper + 1e-12


@FAST
@given(seeds, st.integers(3, 10), st.floats(0.0, 0.1))
def test_nri_mass_conservation(seed, n, min_prob):
    ctmc = random_chain(np.random.default_rng(seed), n, density=0.4)
    rep = explore_nri(ctmc, 1.0, CutoffCriteria(min_prob=min_prob, max_len=8))
    listed = math.fsum(s.embedded_prob for s in rep.sequences)
    assert math.isclose(listed + rep.discarded_mass, rep.epsilon, rel_tol=1e-9, abs_tol=1e-12)
    assert 0.0 <= rep.bound <= 1.0


@FAST
@given(seeds, st.integers(1, 10))
def test_mocus_minimal_and_complete(seed, n):
    f = random_formula(np.random.default_rng(seed), n)
    sets = mocus_mcs(f, literals(f)).sets
    assert sets == minimal_true_points(f)
    for s in sets:
        assert evaluate(f, s) and not any(evaluate(f, s - {x}) for x in s)


@FAST
@given(seeds, st.integers(1, 10), st.data())
def test_bdd_between_bounds(seed, n, data):
    f = random_formula(np.random.default_rng(seed), n)
    sets = minimal_true_points(f)
    names = sorted({x for s in sets for x in s})
    probs = {x: data.draw(prob, label=x) for x in names}
    exact = mcs_bdd_probability(sets, probs)
    rare, mcub = mcs_bounds(sets, probs)
    biggest = max(math.prod(probs[x] for x in s) for s in sets)
    assert biggest - 1e-12 <= exact <= mcub + 1e-12 <= rare + 2e-12


@FAST
@given(seeds, st.integers(1, 8), st.data())
def test_bdd_monotone_in_leaf_probability(seed, n, data):
    f = random_formula(np.random.default_rng(seed), n)
    sets = minimal_true_points(f)
    names = sorted({x for s in sets for x in s})
    probs = {x: data.draw(st.floats(0.0, 0.9), label=x) for x in names}
    raised = dict(probs)
    raised[names[0]] = min(1.0, probs[names[0]] + 0.1)
    assert mcs_bdd_probability(sets, raised) >= mcs_bdd_probability(sets, probs) - 1e-12


@FAST
@given(rate, rate, st.floats(0.0, 1.0), st.floats(1e-3, 1.0), st.floats(1e-3, 1.0))
def test_iab_barrier_monotonicity(lam_i, lam_b, mu_b, mu_i, extra):
    def freq(lb, mi):
        return iab_cutset_rate(CutSet(Initiator("I", lam_i, mi), (InFunctionBarrier("B", lb, mu_b),)))

    base = freq(lam_b, mu_i)
    assert 0.0 <= base <= lam_i * (1 + 1e-12)
    assert freq(lam_b * 2, mu_i) >= base * (1 - 1e-12)
    assert freq(lam_b, mu_i + extra) <= base * (1 + 1e-12)


@FAST
@given(rate, st.floats(0.01, 1.0), st.lists(prob, min_size=1, max_size=3), st.lists(rate, min_size=0, max_size=3))
def test_iab_adding_barriers_never_raises_frequency(lam_i, mu_i, gammas, lams):
    ond = tuple(OnDemandBarrier(f"G{k}", g) for k, g in enumerate(gammas))
    inf = tuple(InFunctionBarrier(f"B{k}", lb, 0.1) for k, lb in enumerate(lams))
    full = iab_cutset_rate(CutSet(Initiator("I", lam_i, mu_i), ond + inf))
    fewer = iab_cutset_rate(CutSet(Initiator("I", lam_i, mu_i), ond[:-1] + inf))
    assert full <= fewer * (1 + 1e-12) + 1e-300


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_model_roundtrip(seed):
    rng = np.random.default_rng(seed)
    model = (standby_model if seed % 2 else spare_chain_model)(rng)
    again = parse_model(dump_model(model))
    assert again == model and again.digest == model.digest


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_ctmc_text_roundtrip(seed):
    ctmc = build_ctmc(spare_chain_model(np.random.default_rng(seed)))
    text = export_ctmc(ctmc)
    back = import_ctmc(text)
    assert export_ctmc(back) == text
    assert np.allclose(back.rate_out, ctmc.rate_out, rtol=0, atol=0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**63), st.integers(1, 3))
def test_simulation_reproducible(seed, workers):
    model = golden_model(lam=0.02)
    a = simulate(model, SimConfig(3_000, 500.0, seed=seed, workers=1))
    b = simulate(model, SimConfig(3_000, 500.0, seed=seed, workers=workers))
    assert np.array_equal(a.failure_times, b.failure_times)
    assert a.tallies == b.tallies
    grid = np.linspace(0, 500.0, 6)
    est = [a.estimate_at(t) for t in grid]
    assert est == sorted(est) and est[-1] == a.estimate


@FAST
@given(prob, st.integers(1, 10**7), st.floats(0.5, 0.999))
def test_ci_halfwidth_shape(p, n, level):
    q = 1.0 - p
    p = 1.0 - q  # exact complement pair, 1.0 - p alone can round
    h = ci_halfwidth(p, n, level)
    assert h >= 0.0
    assert math.isclose(h, ci_halfwidth(q, n, level), rel_tol=1e-9, abs_tol=1e-15)
    assert ci_halfwidth(p, n * 4, level) <= h * 0.5 + 1e-15
