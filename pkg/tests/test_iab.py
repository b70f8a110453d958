import itertools
import json
import math

import numpy as np
import pytest

from bdmpq import (
    CutSet,
    InFunctionBarrier,
    Initiator,
    OnDemandBarrier,
    build_ctmc,
    iab_cutset_rate,
    iab_system,
    mocus_mcs,
    structure_function,
    transient,
)
from bdmpq.iab import cut_set_from_leaves, iab_cutset_detail, iab_model
from bdmpq.library import golden_model
from bdmpq.model import EXP, Leaf, ModelError, model_to_dict, parse_model

from corpus import spare_chain_model, standby_model


def dense_barrier_probability(lams, mus, exit_rate):
    """P(all exponential barriers down together before an Exp(exit_rate) return to safety).

    States are failure patterns of the barriers; solved with a dense generator.
    """
    n = len(lams)
    patterns = list(itertools.product((0, 1), repeat=n))
    idx = {p: i for i, p in enumerate(patterns)}
    full = idx[(1,) * n]
    m = len(patterns)
    Q = np.zeros((m, m))
    out = np.zeros(m)  # rate to the safe state
    for p, i in idx.items():
        if i == full:
            continue
        out[i] = exit_rate
        for j in range(n):
            q = list(p)
            q[j] = 1 - p[j]
            Q[i, idx[tuple(q)]] += mus[j] if p[j] else lams[j]
    free = [i for i in range(m) if i != full]
    A = np.diag(Q[free].sum(axis=1) + out[free]) - Q[np.ix_(free, free)]
    x = np.linalg.solve(A, Q[free, full])
    return float(x[free.index(idx[(0,) * n])])


def test_single_ondemand_barrier():
    for lam, gamma in ((1e-3, 1e-2), (2.5e-4, 0.37), (1e-2, 1.0)):
        cs = CutSet(Initiator("I", lam, 0.1), (OnDemandBarrier("G", gamma, 0.5),))
        assert iab_cutset_rate(cs) == lam * gamma


def test_single_in_function_barrier():
    for lam_i, mu_i, lam_b in ((1e-3, 0.1, 2e-3), (1e-4, 0.02, 0.5), (3e-3, 1.0, 1e-6)):
        cs = CutSet(Initiator("I", lam_i, mu_i), (InFunctionBarrier("B", lam_b, 0.3),))
        closed = lam_i * lam_b / (lam_b + mu_i)
        dense = lam_i * dense_barrier_probability([lam_b], [0.3], mu_i)
        got = iab_cutset_detail(cs)
        assert abs(got.frequency - closed) <= 1e-12 * max(1.0, closed)
        assert abs(got.frequency - dense) <= 1e-12
        assert got.residual < 1e-10


@pytest.mark.parametrize("seed", range(25))
def test_in_function_barriers_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    lams = rng.uniform(1e-4, 1e-1, n)
    mus = rng.uniform(0.0, 1.0, n)
    mu_i = float(rng.uniform(0.01, 1.0))
    ond = [OnDemandBarrier(f"G{j}", float(rng.uniform(0.01, 1.0)), float(rng.uniform(0, 0.5))) for j in range(int(rng.integers(0, 3)))]
    barriers = tuple(InFunctionBarrier(f"B{j}", float(l), float(m)) for j, (l, m) in enumerate(zip(lams, mus)))
    cs = CutSet(Initiator("I", 1e-3, mu_i), barriers + tuple(ond))
    got = iab_cutset_detail(cs)
    exit_rate = mu_i + sum(g.mu for g in ond)
    prob = dense_barrier_probability(lams, mus, exit_rate)
    assert 0.0 <= got.probability <= 1.0
    assert got.probability == pytest.approx(prob, abs=1e-12)
    assert got.demand_factor == pytest.approx(math.prod(g.gamma for g in ond), rel=1e-15)
    assert got.residual < 1e-10


def test_erlang_barrier_closed_form():
    lam, k, r, mu_i = 1e-3, 3, 0.5, 0.2
    cs = CutSet(Initiator("I", 1.0, mu_i), (InFunctionBarrier("E", lam, 0.0, k, r),))
    tot = r + lam + mu_i
    adv, fail = r / tot, lam / tot
    closed = sum(adv ** j * fail for j in range(k)) + adv ** k
    assert iab_cutset_detail(cs).probability == pytest.approx(closed, abs=1e-14)


def test_no_repair_means_certain():
    cs = CutSet(Initiator("I", 1e-3, 0.0), (InFunctionBarrier("B", 1e-5, 0.0),))
    assert iab_cutset_rate(cs) == pytest.approx(1e-3)


def test_zero_gamma_and_initiator_only():
    assert iab_cutset_rate(CutSet(Initiator("I", 1e-3), (OnDemandBarrier("G", 0.0),))) == 0.0
    assert iab_cutset_rate(CutSet(Initiator("I", 1e-3, 0.5))) == 1e-3


def test_cut_set_validation():
    with pytest.raises(ValueError):
        CutSet(Initiator("I", 1e-3), (OnDemandBarrier("I", 0.1),))
    with pytest.raises(ValueError):
        CutSet(Initiator("I", 1e-3), (OnDemandBarrier("G", 1.1),))
    with pytest.raises(ValueError):
        CutSet(Initiator("I", -1.0))
    with pytest.raises(ValueError):
        iab_cutset_rate(CutSet(Initiator("I", 1e-3), tuple(InFunctionBarrier(f"B{j}", 1e-3) for j in range(13))))


def test_det_barrier_rejected():
    init = Leaf("I", EXP, lambda_active=1e-3, mu=0.1, initiator=True)
    with pytest.raises(ModelError, match="erlang"):
        cut_set_from_leaves(init, [Leaf("B", "det", duration=2.0)])


def test_system_combination():
    css = [
        CutSet(Initiator("I", 1e-3, 0.1), (OnDemandBarrier("G", 0.1),)),
        CutSet(Initiator("J", 2e-3, 0.1), (InFunctionBarrier("B", 1e-3, 0.1),)),
    ]
    res = iab_system(css, 1e4)
    assert res.equivalent_rate == pytest.approx(sum(iab_cutset_rate(c) for c in css))
    assert res.unreliability == pytest.approx(-math.expm1(-res.equivalent_rate * 1e4))
    assert res.frequencies == sorted(res.frequencies, reverse=True)
    assert res.cut_sets[0].text() == "{*I, G}"


def test_golden_iab_conservative():
    model = golden_model()
    res = iab_model(model, 1e4)
    assert [cs.text() for cs in res.cut_sets] == ["{*S1, S2, S3}"]
    exact = transient(build_ctmc(model), 1e4).goal_probability
    assert res.unreliability >= exact


@pytest.mark.parametrize("seed", range(10))
def test_corpus_probabilities_and_residuals(seed):
    rng = np.random.default_rng(seed)
    model = (standby_model if seed % 2 else spare_chain_model)(rng)
    mcs = mocus_mcs(structure_function(model), model.leaf_map)
    for cs in mcs.cut_sets:
        d = iab_cutset_detail(cs)
        assert 0.0 <= d.probability <= 1.0
        assert d.residual < 1e-10


def test_coupled_repair_warning():
    doc = model_to_dict(golden_model())
    doc["repair_groups"] = {"crew": ["S1", "S2"]}
    with pytest.warns(UserWarning, match="repair groups"):
        res = iab_model(parse_model(json.dumps(doc)), 1e4)
    assert any("crew" in d for d in res.diagnostics)
