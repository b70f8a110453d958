"""Run one engine on a model and package the outcome as an ``AnalysisReport``."""
from __future__ import annotations

import time
from dataclasses import dataclass

from .bdd import leaf_probabilities, mcs_bdd, mcs_bounds
from .cutsets import mocus_mcs, structure_function
from .iab import iab_model
from .model import Bdmp
from .montecarlo import SimConfig, default_workers, simulate
from .report import AnalysisReport, Estimate
from .sequences import CutoffCriteria, explore_nri, explore_ns
from .solve import DEFAULT_TOL, transient
from .statespace import build_ctmc


@dataclass(frozen=True)
class Settings:
    times: tuple[float, ...] = (1e4,)
    cutoff: float = 0.0          # min_prob for sequences, frequency*t threshold for cut sets
    max_len: int = 0
    max_failures: int = 0
    max_repairs: int = 0
    tol: float = DEFAULT_TOL
    filtering: bool = False
    seed: int = 0
    trials: int = 100_000
    ci_level: float = 0.90
    battery_policy: str = "optimistic"
    workers: int | None = None
    ns_budget: int = 2_000_000
    max_states: int = 2_000_000

    def criteria(self, default_min_prob: float = 0.0) -> CutoffCriteria:
        return CutoffCriteria(self.cutoff or default_min_prob, self.max_len, self.max_failures, self.max_repairs)


class _Clock:
    def __enter__(self):
        self.wall, self.cpu = time.perf_counter(), time.process_time()
        return self

    def __exit__(self, *exc):
        self.wall = time.perf_counter() - self.wall
        self.cpu = time.process_time() - self.cpu


def _ctmc(model: Bdmp, s: Settings):
    return build_ctmc(model, filtering=s.filtering, max_states=s.max_states)


def _seq_items(seqs) -> list[dict]:
    return [
        {"rank": r + 1, "value": q.probability, "text": q.text(), "labels": [lab.token() for lab in q.labels]}
        for r, q in enumerate(seqs)
    ]


def run_transient(model: Bdmp, s: Settings) -> AnalysisReport:
    with _Clock() as clk:
        ctmc = _ctmc(model, s)
        results = [Estimate(t, transient(ctmc, t, s.tol).goal_probability) for t in s.times]
    return AnalysisReport(
        "transient", model.digest, {"tol": s.tol, "filtering": s.filtering}, results,
        counters={"states": ctmc.n_states, "transitions": ctmc.n_transitions},
        wall_time=clk.wall, cpu_time=clk.cpu,
    )


def run_nri(model: Bdmp, s: Settings) -> AnalysisReport:
    with _Clock() as clk:
        ctmc = _ctmc(model, s)
        crit = s.criteria()
        reports = [explore_nri(ctmc, t, crit) for t in s.times]
    last = reports[-1]
    notes = ["exploration budget exhausted; listing is partial"] if last.partial else []
    return AnalysisReport(
        "nri", model.digest, {"min_prob": crit.min_prob, "max_len": crit.max_len, "filtering": s.filtering},
        [Estimate(r.t, r.bound, upper=r.bound) for r in reports],
        items=_seq_items(last.sequences),
        counters={
            "states": ctmc.n_states, "transitions": ctmc.n_transitions,
            "explored": len(last.explored), "Lambda": last.Lambda, "epsilon": last.epsilon,
            "discarded_mass": last.discarded_mass,
        },
        notes=notes, wall_time=clk.wall, cpu_time=clk.cpu,
    )


def run_ns(model: Bdmp, s: Settings) -> AnalysisReport:
    with _Clock() as clk:
        ctmc = _ctmc(model, s)
        crit = s.criteria(default_min_prob=1e-9)
        reports = [explore_ns(ctmc, t, crit, max_expansions=s.ns_budget) for t in s.times]
    last = reports[-1]
    notes = [
        f"t={r.t:g}: budget exhausted at min_prob={crit.min_prob:g}; bounds use min_prob={r.effective_min_prob:g}"
        for r in reports if r.partial
    ]
    return AnalysisReport(
        "ns", model.digest, {"min_prob": crit.min_prob, "max_len": crit.max_len, "budget": s.ns_budget},
        [Estimate(r.t, r.lower, lower=r.lower, upper=r.upper) for r in reports],
        items=_seq_items(last.sequences),
        counters={
            "states": ctmc.n_states, "complete": last.complete_count,
            "truncated": last.truncated_count, "expanded": last.expanded,
            "effective_min_prob": last.effective_min_prob,
        },
        notes=notes, wall_time=clk.wall, cpu_time=clk.cpu,
    )


def run_mc(model: Bdmp, s: Settings) -> AnalysisReport:
    from .montecarlo import ci_halfwidth

    horizon = max(s.times)
    cfg = SimConfig(s.trials, horizon, s.seed, s.ci_level, s.battery_policy, s.workers or default_workers())
    with _Clock() as clk:
        rep = simulate(model, cfg)
    results = []
    for t in s.times:
        p = rep.estimate_at(t)
        results.append(Estimate(t, p, ci_halfwidth=ci_halfwidth(p, rep.trials, s.ci_level)))
    items = [
        {"rank": r + 1, "value": count, "text": ", ".join(labels), "labels": list(labels)}
        for r, (labels, count) in enumerate(rep.tallies)
    ]
    return AnalysisReport(
        "mc", model.digest,
        {"trials": s.trials, "seed": s.seed, "ci_level": s.ci_level, "battery_policy": s.battery_policy},
        results, items=items, counters={"trials": rep.trials, "failures": rep.failures},
        wall_time=clk.wall, cpu_time=clk.cpu,
    )


def run_iab(model: Bdmp, s: Settings) -> AnalysisReport:
    with _Clock() as clk:
        res = iab_model(model, max(s.times), s.cutoff)
    items = [
        {"rank": r + 1, "value": f, "text": cs.text(), "events": list(cs.events), "initiator": cs.initiator.id}
        for r, (cs, f) in enumerate(zip(res.cut_sets, res.frequencies))
    ]
    return AnalysisReport(
        "iab", model.digest, {"cutoff": s.cutoff, "method": "I&AB (exact per-cut-set solve)"},
        [Estimate(t, res.unreliability_at(t)) for t in s.times],
        items=items,
        counters={"cut_sets": len(res.cut_sets), "equivalent_rate": res.equivalent_rate,
                  "discarded_bound": res.discarded_bound},
        notes=res.diagnostics, wall_time=clk.wall, cpu_time=clk.cpu,
    )


def run_mcs_bdd(model: Bdmp, s: Settings) -> AnalysisReport:
    """Static quantification: every minimal cut set, non-repairable leaf probabilities."""
    with _Clock() as clk:
        flagged = [leaf.id for leaf in model.leaves if leaf.initiator] or [model.leaves[0].id]
        sets = mocus_mcs(structure_function(model), flagged).sets
        results, nodes = [], 0
        for t in s.times:
            probs = leaf_probabilities(model, t)
            exact = mcs_bdd(sets, probs)
            rare, mcub = mcs_bounds(sets, probs)
            nodes = exact.nodes
            results.append(Estimate(t, exact.probability, upper=min(mcub, rare)))
    probs = leaf_probabilities(model, max(s.times))
    ranked = sorted(sets, key=lambda c: (-_prod(probs, c), sorted(c)))
    items = [
        {"rank": r + 1, "value": _prod(probs, c), "text": "{" + ", ".join(sorted(c)) + "}", "events": sorted(c)}
        for r, c in enumerate(ranked)
    ]
    return AnalysisReport(
        "mcs-bdd", model.digest, {"order": "descending probability"},
        results, items=items,
        counters={"cut_sets": len(sets), "bdd_nodes": nodes, "rare_event_sum": rare, "mcub": mcub},
        wall_time=clk.wall, cpu_time=clk.cpu,
    )


def _prod(probs, names) -> float:
    out = 1.0
    for n in names:
        out *= probs[n]
    return out


RUNNERS = {
    "transient": run_transient,
    "nri": run_nri,
    "ns": run_ns,
    "mc": run_mc,
    "iab": run_iab,
    "mcs-bdd": run_mcs_bdd,
}


def run(engine: str, model: Bdmp, settings: Settings) -> AnalysisReport:
    try:
        runner = RUNNERS[engine]
    except KeyError:
        raise ValueError(f"unknown engine {engine!r}; choose from {sorted(RUNNERS)}") from None
    return runner(model, settings)
