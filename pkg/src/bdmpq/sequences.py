"""Path-based quantification of failure sequences.

``explore_nri`` bounds unreliability by ``1 - exp(-Lambda * eps * t)`` where
``Lambda`` is the exit rate of the initial state and ``eps`` the probability
of reaching a goal state before coming back to it.  ``eps`` comes from an
exact linear solve; the listed sequences are the loop-free prefixes of the
path tree, and whatever probability they do not cover is reported as
discarded mass.

``explore_ns`` walks the full sequence tree (loops included), weighting each
sequence by the probability that it completes before ``t``, and returns a
lower bound (complete sequences) and an upper bound (plus truncated ones).
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from ._accel import USE_NUMBA, njit
from .ctmc import CtmcSparse, TransitionLabel
from .solve import absorption_probabilities, poisson_weights

NS_TOL = 1e-12


@dataclass(frozen=True)
class CutoffCriteria:
    min_prob: float = 0.0
    max_len: int = 0
    max_failures: int = 0
    max_repairs: int = 0

    def __post_init__(self):
        if not 0.0 <= self.min_prob <= 1.0:
            raise ValueError("min_prob must lie in [0, 1]")
        if min(self.max_len, self.max_failures, self.max_repairs) < 0:
            raise ValueError("cutoff counts must be >= 0")

    def exceeded(self, length: int, failures: int, repairs: int) -> bool:
        return (
            (self.max_len and length >= self.max_len)
            or (self.max_failures and failures > self.max_failures)
            or (self.max_repairs and repairs > self.max_repairs)
        )


@dataclass(frozen=True)
class Sequence:
    labels: tuple[TransitionLabel, ...]
    states: tuple[int, ...]
    embedded_prob: float
    timed_prob: float | None = None
    complete: bool = True
    # failure, loop or truncated
    kind: str = "failure"

    @property
    def probability(self) -> float:
        return self.embedded_prob if self.timed_prob is None else self.timed_prob

    def text(self) -> str:
        return ", ".join(label.short() for label in self.labels)

    def to_dict(self, rank: int | None = None) -> dict:
        out = {
            "labels": [label.token() for label in self.labels],
            "probability": self.probability,
            "embedded_prob": self.embedded_prob,
            "kind": self.kind,
        }
        if self.timed_prob is not None:
            out["timed_prob"] = self.timed_prob
        if rank is not None:
            out["rank"] = rank
        return out


def rank_sequences(seqs) -> list[Sequence]:
    """Descending probability, ties by label tokens."""
    return sorted(seqs, key=lambda s: (-s.probability, tuple(l.token() for l in s.labels)))


@dataclass
class NriReport:
    t: float
    Lambda: float
    epsilon: float
    bound: float
    sequences: list[Sequence]
    explored: list[Sequence]
    discarded_mass: float
    loop_mass: float = 0.0
    truncated_mass: float = 0.0
    expanded: int = 0
    partial: bool = False


@dataclass
class NsReport:
    t: float
    lower: float
    upper: float
    sequences: list[Sequence]
    complete_count: int = 0
    truncated_count: int = 0
    expanded: int = 0
    partial: bool = False
    truncated_mass: float = 0.0
    # threshold of the walk that produced the bounds (above the requested one when partial)
    effective_min_prob: float = 0.0


def _path_labels(node) -> tuple[tuple[TransitionLabel, ...], tuple[int, ...]]:
    labels, states = [], []
    while node is not None:
        label, state, node = node
        if label is not None:
            labels.append(label)
        states.append(state)
    return tuple(reversed(labels)), tuple(reversed(states))


def explore_nri(
    ctmc: CtmcSparse,
    t: float,
    cutoff: CutoffCriteria = CutoffCriteria(),
    max_expansions: int = 1_000_000,
) -> NriReport:
    init = ctmc.initial
    if init in ctmc.goal:
        raise ValueError("initial state is a goal state")
    rate_out = ctmc.rate_out
    Lam = float(rate_out[init])
    goal = ctmc.goal
    x = absorption_probabilities(ctmc, goal, {init}) if goal else np.zeros(ctmc.n_states)
    out = ctmc.outgoing()
    eps = math.fsum(tr.rate / Lam * x[tr.dst] for tr in out[init]) if Lam > 0 else 0.0
    eps = min(max(eps, 0.0), 1.0)

    listed: list[Sequence] = []
    explored: list[Sequence] = []
    loop_mass = trunc_mass = below_mass = 0.0
    counter = 0
    # heap entries: (-prob, tiebreak, prob, state, path-node, visited, failures, repairs)
    root = (None, init, None)
    heap = [(-1.0, 0, 1.0, init, root, frozenset([init]), 0, 0)]
    expanded = 0
    partial = False
    while heap:
        if expanded >= max_expansions:
            partial = True
            for _, _, prob, state, _, _, _, _ in heap:
                trunc_mass += prob * x[state]
            break
        _, _, prob, s, node, visited, nf, nr = heapq.heappop(heap)
        expanded += 1
        depth = len(visited) - 1
        for tr in sorted(out[s], key=lambda tr: tr.label.sort_key):
            p = prob * tr.rate / rate_out[s]
            d = tr.dst
            if d == init:
                continue
            child = (tr.label, d, node)
            if d in goal:
                labels, states = _path_labels(child)
                seq = Sequence(labels, states, p, complete=True, kind="failure")
                explored.append(seq)
                if p >= cutoff.min_prob:
                    listed.append(seq)
                else:
                    below_mass += p
                continue
            if d in visited:
                labels, states = _path_labels(child)
                explored.append(Sequence(labels, states, p, complete=False, kind="loop"))
                loop_mass += p * x[d]
                continue
            nf2 = nf + (not tr.label.is_repair)
            nr2 = nr + tr.label.is_repair
            if p < cutoff.min_prob or cutoff.exceeded(depth + 1, nf2, nr2):
                trunc_mass += p * x[d]
                continue
            counter += 1
            heapq.heappush(heap, (-p, counter, p, d, child, visited | {d}, nf2, nr2))

    listed = rank_sequences(listed)
    discarded = loop_mass + trunc_mass + below_mass
    bound = -math.expm1(-Lam * eps * t)
    return NriReport(
        t=float(t),
        Lambda=Lam,
        epsilon=eps,
        bound=bound,
        sequences=listed,
        explored=rank_sequences(explored),
        discarded_mass=discarded,
        loop_mass=loop_mass,
        truncated_mass=trunc_mass,
        expanded=expanded,
        partial=partial,
    )


# -- hypoexponential kernels --------------------------------------------------------
#
# For a path whose k-th state leaves at rate r_k, uniformize at rate q >= max r_k:
# the position walks one step forward with probability a_k = r_k / q per tick.
# u_k[n] = P(position == k after n ticks); C_k[n] = P(position >= k after n ticks).


@njit
def _advance_nb(u, a_prev, a_new):
    out = np.empty_like(u)
    out[0] = 0.0
    stay = 1.0 - a_new
    for n in range(1, u.shape[0]):
        out[n] = stay * out[n - 1] + a_prev * u[n - 1]
    return out


@njit
def _reach_cdf_nb(u, a, left, weights):
    # sum_n w_n * C[n] with C[n] = a * sum_{m<n} u[m]
    c = 0.0
    total = 0.0
    right = left + weights.shape[0] - 1
    for n in range(right + 1):
        if n >= left:
            total += weights[n - left] * c
        c += a * u[n]
    return total


def _advance_np(u, a_prev, a_new):
    return lfilter([0.0, a_prev], [1.0, -(1.0 - a_new)], u)


def _reach_cdf_np(u, a, left, weights):
    c = np.empty_like(u)
    c[0] = 0.0
    np.cumsum(a * u[:-1], out=c[1:])
    return float(weights @ c[left:left + len(weights)])


if USE_NUMBA:
    _advance, _reach_cdf = _advance_nb, _reach_cdf_nb
else:
    _advance, _reach_cdf = _advance_np, _reach_cdf_np


def _first_position(a0: float, length: int) -> np.ndarray:
    return np.power(1.0 - a0, np.arange(length, dtype=float))


def sequence_time_prob(steps, t: float, tol: float = NS_TOL) -> float:
    """Probability that a given path is followed and completed before ``t``.

    ``steps`` holds ``(jump_rate, exit_rate)`` per transition: the rate of the
    transition taken and the total exit rate of the state it leaves.
    """
    steps = list(steps)
    prob = 1.0
    for rate, exit_rate in steps:
        prob *= rate / exit_rate
    if not steps:
        return 1.0
    if t <= 0:
        return 0.0
    q = max(exit_rate for _, exit_rate in steps)
    left, right, weights = poisson_weights(q * t, tol)
    a = [exit_rate / q for _, exit_rate in steps]
    u = _first_position(a[0], right + 1)
    for k in range(1, len(a)):
        u = _advance(u, a[k - 1], a[k])
    return prob * _reach_cdf(u, a[-1], left, weights)


def explore_ns(
    ctmc: CtmcSparse,
    t: float,
    cutoff: CutoffCriteria = CutoffCriteria(min_prob=1e-9),
    max_expansions: int = 2_000_000,
    keep: int = 1000,
    tol: float = NS_TOL,
) -> NsReport:
    """Depth-first walk of the sequence tree with cutoffs.

    A prefix is truncated when its timed probability is ``<= min_prob`` or a
    count limit is hit; truncated prefixes only feed the upper bound, with the
    Poisson truncation ``tol`` added once so the bound stays rigorous.

    When ``max_expansions`` runs out, the walk restarts with ``min_prob``
    raised tenfold until it completes, so the bounds always come from a
    complete walk and keep tightening as ``min_prob`` decreases.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    if ctmc.initial in ctmc.goal:
        raise ValueError("initial state is a goal state")
    threshold = cutoff.min_prob
    while True:
        crit = replace(cutoff, min_prob=min(threshold, 1.0))
        rep = _ns_walk(ctmc, t, crit, max_expansions, keep, tol)
        if rep is not None:
            rep.partial = threshold != cutoff.min_prob
            return rep
        threshold = max(threshold * 10.0, 1e-15)


def _ns_walk(ctmc: CtmcSparse, t: float, cutoff: CutoffCriteria, max_expansions: int, keep: int, tol: float):
    """One walk at a fixed threshold; ``None`` when the expansion budget runs out."""
    init = ctmc.initial
    if cutoff.min_prob >= 1.0:
        return NsReport(float(t), 0.0, 1.0, [], 0, 1, 0, False, 1.0, 1.0)
    rate_out = ctmc.rate_out
    q = float(rate_out.max())
    left, right, weights = poisson_weights(q * t, tol)
    length = right + 1
    out = [sorted(row, key=lambda tr: tr.label.sort_key) for row in ctmc.outgoing()]
    goal = ctmc.goal

    lower_terms: list[float] = []
    upper_terms: list[float] = []
    best: list = []  # min-heap of (timed, neg-order, Sequence) for the top `keep`
    complete_count = truncated_count = 0
    expanded = 0
    a0 = rate_out[init] / q

    # stack entries: (state, prob, u, path-node, depth, failures, repairs)
    stack = [(init, 1.0, _first_position(a0, length), (None, init, None), 0, 0, 0)]
    while stack:
        if expanded >= max_expansions:
            return None
        s, prob, u, node, depth, nf, nr = stack.pop()
        expanded += 1
        a_s = rate_out[s] / q
        cdf = _reach_cdf(u, a_s, left, weights)
        children = []
        cache: dict[float, np.ndarray] = {}
        for tr in out[s]:
            p = prob * tr.rate / rate_out[s]
            d = tr.dst
            timed = p * cdf
            if d in goal:
                lower_terms.append(timed)
                complete_count += 1
                if timed > 0.0:
                    labels, states = _path_labels((tr.label, d, node))
                    seq = Sequence(labels, states, p, timed, True, "failure")
                    order = _Rev(tuple(l.token() for l in labels))
                    if len(best) < keep:
                        heapq.heappush(best, (timed, order, seq))
                    elif timed > best[0][0]:
                        heapq.heapreplace(best, (timed, order, seq))
                continue
            if rate_out[d] <= 0.0:
                continue
            nf2 = nf + (not tr.label.is_repair)
            nr2 = nr + tr.label.is_repair
            if timed <= cutoff.min_prob or cutoff.exceeded(depth + 1, nf2, nr2):
                upper_terms.append(timed)
                truncated_count += 1
                continue
            a_d = rate_out[d] / q
            u2 = cache.get(a_d)
            if u2 is None:
                u2 = cache[a_d] = _advance(u, a_s, a_d)
            children.append((d, p, u2, (tr.label, d, node), depth + 1, nf2, nr2))
        stack.extend(reversed(children))

    lower = min(math.fsum(lower_terms), 1.0)
    trunc = math.fsum(upper_terms)
    # Poisson tail ignored by every timed probability: at most tol over a prefix-free set
    upper = min(lower + trunc + tol, 1.0)
    seqs = rank_sequences(item[2] for item in best)
    return NsReport(
        float(t), lower, upper, seqs, complete_count, truncated_count, expanded, False, trunc, cutoff.min_prob
    )


class _Rev:
    """Inverts comparison so equal probabilities keep the lexicographically first labels."""

    __slots__ = ("key",)

    def __init__(self, key):
        self.key = key

    def __lt__(self, other):
        return self.key > other.key

    def __eq__(self, other):
        return self.key == other.key
