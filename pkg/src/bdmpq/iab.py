"""Initiator & all-barriers quantification of cut sets.

Each cut set is quantified by an exact absorption solve on a small chain
that starts when the initiator fails.  The initiator is then under repair;
its repair, or the repair of a failed on-demand barrier, leads to a safe
state.  In-function barriers keep failing and being repaired.  The chain
fails once every barrier is down at the same time.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence, Union

from .ctmc import ctmc_from_rates
from .model import DET, ERLANG, EXP, ONDEMAND, Bdmp, Leaf, ModelError
from .solve import absorption_probabilities, absorption_residual

MAX_BARRIERS = 12


@dataclass(frozen=True)
class Initiator:
    id: str
    lam: float
    mu: float = 0.0


@dataclass(frozen=True)
class OnDemandBarrier:
    id: str
    gamma: float
    mu: float = 0.0


@dataclass(frozen=True)
class InFunctionBarrier:
    id: str
    lam: float
    mu: float = 0.0
    # Erlang barriers fail after ``phases`` advances at ``phase_rate`` (or at ``lam`` from any phase)
    phases: int = 0
    phase_rate: float = 0.0


Barrier = Union[OnDemandBarrier, InFunctionBarrier]


@dataclass(frozen=True)
class CutSet:
    initiator: Initiator
    barriers: tuple[Barrier, ...] = ()

    def __post_init__(self):
        ids = [self.initiator.id] + [b.id for b in self.barriers]
        if len(set(ids)) != len(ids):
            raise ValueError(f"repeated event in cut set {ids}")
        values = [self.initiator.lam, self.initiator.mu]
        for b in self.barriers:
            values += [b.gamma, b.mu] if isinstance(b, OnDemandBarrier) else [b.lam, b.mu, b.phase_rate]
            if isinstance(b, OnDemandBarrier) and not 0.0 <= b.gamma <= 1.0:
                raise ValueError(f"gamma of {b.id!r} outside [0, 1]")
        if any(not (v >= 0.0 and math.isfinite(v)) for v in values):
            raise ValueError("cut set parameters must be finite and >= 0")

    @property
    def events(self) -> tuple[str, ...]:
        return (self.initiator.id,) + tuple(b.id for b in self.barriers)

    @property
    def leaf_set(self) -> frozenset:
        return frozenset(self.events)

    def text(self) -> str:
        return "{" + "*" + self.initiator.id + "".join(", " + b.id for b in self.barriers) + "}"


def cut_set_from_leaves(initiator: Leaf, barriers: Sequence[Leaf]) -> CutSet:
    if initiator.kind != EXP:
        raise ModelError(f"initiator {initiator.id!r} must be an exponential leaf")
    out: list[Barrier] = []
    for leaf in barriers:
        if leaf.kind == ONDEMAND:
            out.append(OnDemandBarrier(leaf.id, leaf.gamma, leaf.mu))
        elif leaf.kind == EXP:
            out.append(InFunctionBarrier(leaf.id, leaf.lambda_active, leaf.mu))
        elif leaf.kind == ERLANG:
            out.append(
                InFunctionBarrier(leaf.id, leaf.lambda_active, leaf.mu, leaf.erlang_phases, leaf.erlang_rate)
            )
        elif leaf.kind == DET:
            raise ModelError(
                f"leaf {leaf.id!r} has a deterministic delay, which cut-set quantification "
                "cannot take into account; use an erlang leaf instead"
            )
    return CutSet(Initiator(initiator.id, initiator.lambda_active, initiator.mu), tuple(out))


@dataclass(frozen=True)
class CutSetQuant:
    frequency: float
    probability: float     # P(all barriers down before returning to safety | initiator failed)
    demand_factor: float   # probability that every on-demand barrier fails at demand
    residual: float
    n_states: int


def iab_cutset_detail(cs: CutSet) -> CutSetQuant:
    if len(cs.barriers) > MAX_BARRIERS:
        raise ValueError(f"cut set with {len(cs.barriers)} barriers exceeds the limit of {MAX_BARRIERS}")
    on_demand = [b for b in cs.barriers if isinstance(b, OnDemandBarrier)]
    in_function = [b for b in cs.barriers if isinstance(b, InFunctionBarrier)]
    demand = math.prod(b.gamma for b in on_demand)
    if demand == 0.0:
        return CutSetQuant(0.0, 0.0, 0.0, 0.0, 0)
    if not in_function:
        return CutSetQuant(cs.initiator.lam * demand, 1.0, demand, 0.0, 1)

    # a barrier sits in phase 0..k-1 while working and at k once failed
    sizes = [max(b.phases, 1) for b in in_function]
    states = list(itertools.product(*[range(k + 1) for k in sizes]))
    index = {s: i for i, s in enumerate(states)}
    safe = len(states)
    fail_state = index[tuple(sizes)]
    to_safe = cs.initiator.mu + math.fsum(b.mu for b in on_demand)
    edges = []
    for s, i in index.items():
        if i == fail_state:
            continue
        if to_safe > 0.0:
            edges.append((i, safe, to_safe))
        for j, (b, k) in enumerate(zip(in_function, sizes)):
            ph = s[j]
            if ph == k:
                if b.mu > 0.0:
                    edges.append((i, index[s[:j] + (0,) + s[j + 1:]], b.mu))
                continue
            failed = s[:j] + (k,) + s[j + 1:]
            if b.phases:
                if b.lam > 0.0:
                    edges.append((i, index[failed], b.lam))
                if b.phase_rate > 0.0:
                    edges.append((i, index[s[:j] + (ph + 1,) + s[j + 1:]], b.phase_rate))
            elif b.lam > 0.0:
                edges.append((i, index[failed], b.lam))
    chain = ctmc_from_rates(edges, len(states) + 1, goal=[fail_state])
    x = absorption_probabilities(chain, {fail_state}, {safe})
    start = index[(0,) * len(sizes)]
    prob = float(x[start])
    residual = absorption_residual(chain, x, {fail_state}, {safe})
    return CutSetQuant(cs.initiator.lam * demand * prob, prob, demand, residual, len(states) + 1)


def iab_cutset_rate(cs: CutSet) -> float:
    """Frequency (per hour) at which the cut set is completed."""
    return iab_cutset_detail(cs).frequency


@dataclass
class IabResult:
    cut_sets: list[CutSet]
    frequencies: list[float]
    equivalent_rate: float
    t: float
    unreliability: float
    discarded_bound: float = 0.0
    diagnostics: list[str] = field(default_factory=list)

    def unreliability_at(self, t: float) -> float:
        return -math.expm1(-self.equivalent_rate * t)

    def ranked(self) -> list[tuple[CutSet, float]]:
        pairs = zip(self.cut_sets, self.frequencies)
        return sorted(pairs, key=lambda cf: (-cf[1], cf[0].events))


def iab_system(mcs: Sequence[CutSet], t: float, discarded_bound: float = 0.0, diagnostics=()) -> IabResult:
    freqs = [iab_cutset_rate(cs) for cs in mcs]
    lam_eq = math.fsum(freqs)
    ranked = sorted(zip(mcs, freqs), key=lambda cf: (-cf[1], cf[0].events))
    return IabResult(
        cut_sets=[c for c, _ in ranked],
        frequencies=[f for _, f in ranked],
        equivalent_rate=lam_eq,
        t=float(t),
        unreliability=-math.expm1(-lam_eq * t),
        discarded_bound=discarded_bound,
        diagnostics=list(diagnostics),
    )


def iab_model(model: Bdmp, t: float, cutoff: float = 0.0) -> IabResult:
    """Structure function, minimal cut sets and per-cut-set solve in one go."""
    from .cutsets import mocus_mcs, structure_function

    diagnostics = []
    coupled = [name for name, members in model.repair_groups.items() if len(members) > 1]
    if coupled:
        msg = (
            f"repair groups {coupled} are ignored by cut-set quantification; "
            "setting the repair rates of coupled leaves to 0 gives a conservative result"
        )
        warnings.warn(msg)
        diagnostics.append(msg)
    result = mocus_mcs(structure_function(model), model.leaf_map, cutoff, t)
    return iab_system(result.cut_sets, t, result.discarded_bound, diagnostics + result.diagnostics)

