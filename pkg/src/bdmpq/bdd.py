"""Minimal cut set list quantification: reduced ordered BDD plus the classic bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from scipy.stats import gamma as gamma_dist

from .model import DET, ERLANG, EXP, ONDEMAND, Bdmp

FALSE, TRUE = 0, 1


class Bdd:
    """Hash-consed node store.  Node ``n >= 2`` is ``(level, low, high)``."""

    def __init__(self, order: list[str]):
        self.order = list(order)
        self.level = {name: i for i, name in enumerate(self.order)}
        self.nodes: list[tuple[int, int, int]] = [(len(order), -1, -1), (len(order), -1, -1)]
        self.unique: dict[tuple[int, int, int], int] = {}
        self._or_cache: dict[tuple[int, int], int] = {}

    def make(self, level: int, low: int, high: int) -> int:
        if low == high:
            return low
        key = (level, low, high)
        node = self.unique.get(key)
        if node is None:
            node = self.unique[key] = len(self.nodes)
            self.nodes.append(key)
        return node

    def conj(self, names: Iterable[str]) -> int:
        """Conjunction of positive literals, built bottom-up along the order."""
        node = TRUE
        for lvl in sorted((self.level[n] for n in set(names)), reverse=True):
            node = self.make(lvl, FALSE, node)
        return node

    def disj(self, a: int, b: int) -> int:
        if a == TRUE or b == TRUE:
            return TRUE
        if a == FALSE or a == b:
            return b
        if b == FALSE:
            return a
        if a > b:
            a, b = b, a
        key = (a, b)
        hit = self._or_cache.get(key)
        if hit is not None:
            return hit
        la, lo_a, hi_a = self.nodes[a]
        lb, lo_b, hi_b = self.nodes[b]
        if la == lb:
            out = self.make(la, self.disj(lo_a, lo_b), self.disj(hi_a, hi_b))
        elif la < lb:
            out = self.make(la, self.disj(lo_a, b), self.disj(hi_a, b))
        else:
            out = self.make(lb, self.disj(a, lo_b), self.disj(a, hi_b))
        self._or_cache[key] = out
        return out

    def probability(self, root: int, probs: Mapping[str, float]) -> float:
        p = [probs[name] for name in self.order]
        memo = {FALSE: 0.0, TRUE: 1.0}
        # nodes are created children-first, so one ascending pass suffices
        for n in range(2, len(self.nodes)):
            lvl, lo, hi = self.nodes[n]
            memo[n] = (1.0 - p[lvl]) * memo[lo] + p[lvl] * memo[hi]
        return memo[root]

    def size(self, root: int) -> int:
        seen, stack = set(), [root]
        while stack:
            n = stack.pop()
            if n < 2 or n in seen:
                continue
            seen.add(n)
            _, lo, hi = self.nodes[n]
            stack += [lo, hi]
        return len(seen)


def _leaf_sets(mcs) -> list[frozenset]:
    out = []
    for cs in mcs:
        out.append(cs.leaf_set if hasattr(cs, "leaf_set") else frozenset(cs))
    return out


def variable_order(sets: list[frozenset], probs: Mapping[str, float]) -> list[str]:
    names = sorted({n for s in sets for n in s})
    return sorted(names, key=lambda n: (-probs[n], n))


@dataclass(frozen=True)
class BddResult:
    probability: float
    nodes: int
    order: tuple[str, ...]


def mcs_bdd(mcs, probs: Mapping[str, float]) -> BddResult:
    sets = _leaf_sets(mcs)
    for name in {n for s in sets for n in s}:
        if not 0.0 <= probs[name] <= 1.0:
            raise ValueError(f"probability of {name!r} outside [0, 1]")
    order = variable_order(sets, probs)
    bdd = Bdd(order)
    root = FALSE
    for s in sorted(sets, key=lambda s: sorted(bdd.level[n] for n in s)):
        root = bdd.disj(root, bdd.conj(s))
    prob = min(max(bdd.probability(root, probs), 0.0), 1.0)
    return BddResult(prob, bdd.size(root), tuple(order))


def mcs_bdd_probability(mcs, probs: Mapping[str, float]) -> float:
    """Exact probability that at least one cut set is complete, leaves independent."""
    return mcs_bdd(mcs, probs).probability


def mcs_bounds(mcs, probs: Mapping[str, float]) -> tuple[float, float]:
    """``(rare_event_sum, mcub)`` for the cut set list."""
    terms = [math.prod(probs[n] for n in s) for s in _leaf_sets(mcs)]
    rare = math.fsum(terms)
    log_none = math.fsum(math.log1p(-p) if p < 1.0 else -math.inf for p in terms)
    return rare, -math.expm1(log_none)


def leaf_probability(leaf, t: float) -> float:
    """Non-repairable probability that the leaf has failed by ``t`` while operating."""
    if leaf.kind == ONDEMAND:
        return float(leaf.gamma)
    if leaf.kind == EXP:
        return -math.expm1(-leaf.lambda_active * t)
    survive = math.exp(-leaf.lambda_active * t)
    if leaf.kind == ERLANG:
        survive *= float(gamma_dist.sf(t, leaf.erlang_phases, scale=1.0 / leaf.erlang_rate))
    elif leaf.kind == DET:
        survive *= 1.0 if t < leaf.duration else 0.0
    return 1.0 - survive


def leaf_probabilities(model: Bdmp, t: float) -> dict[str, float]:
    return {leaf.id: leaf_probability(leaf, t) for leaf in model.leaves}
