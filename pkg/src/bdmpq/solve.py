"""Transient and absorption solvers for explicit CTMCs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._accel import USE_NUMBA, njit
from .ctmc import CtmcSparse

DEFAULT_TOL = 1e-10
DIRECT_SOLVE_LIMIT = 10_000


class SolverError(ArithmeticError):
    pass


@dataclass(frozen=True)
class UniformizedChain:
    rate: float
    pbar: sp.csr_matrix
    degenerate: bool = False


@dataclass(frozen=True)
class TransientResult:
    t: float
    distribution: np.ndarray
    goal_probability: float
    truncation: tuple[int, int]
    tolerance: float
    uniformization_rate: float


def make_absorbing(ctmc: CtmcSparse, goals) -> CtmcSparse:
    """Drop every transition leaving a state of ``goals``; ``goals`` becomes the goal set."""
    goals = frozenset(int(g) for g in goals)
    if not goals.issubset(range(ctmc.n_states)):
        raise ValueError("goal states outside the chain")
    kept = [t for t in ctmc.transitions if t.src not in goals]
    return CtmcSparse(ctmc.states, ctmc.names, kept, goals)


def uniformize(ctmc: CtmcSparse) -> UniformizedChain:
    """Stochastic matrix ``I + Q/r`` with ``r`` the largest exit rate.

    Slower states get a self-loop of probability ``1 - r(s)/r``; an existing
    self-loop of rate ``R(s,s)`` contributes ``R(s,s)/r`` on top of that.
    """
    rates = ctmc.rate_out
    r = float(rates.max()) if rates.size else 0.0
    n = ctmc.n_states
    if r <= 0.0:
        return UniformizedChain(0.0, sp.identity(n, format="csr"), True)
    pbar = (ctmc.rate_matrix / r + sp.diags(1.0 - rates / r)).tocsr()
    pbar.sum_duplicates()
    pbar.eliminate_zeros()
    return UniformizedChain(r, pbar)


def poisson_weights(rt: float, tol: float = DEFAULT_TOL) -> tuple[int, int, np.ndarray]:
    """Truncated Poisson(rt) probabilities on ``[left, right]``.

    Weights are built outward from the mode with the recurrence ratios, so
    nothing underflows, then normalised.  Each tail is cut where a geometric
    bound on the remaining mass falls below ``tol * 1e-3 / 2``; the retained
    mass is therefore at least ``1 - tol`` and every normalised weight is
    within ``1e-3 * tol`` (relative) of the exact one.
    """
    if not (rt >= 0.0) or not math.isfinite(rt):
        raise ValueError(f"rt must be finite and >= 0, got {rt}")
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    if tol < 1e-14:
        raise SolverError(f"tol={tol} is below what double precision can certify")
    if rt == 0.0:
        return 0, 0, np.ones(1)
    cut = tol * 5e-4
    mode = int(math.floor(rt))
    right = [1.0]
    i, w = mode, 1.0
    while True:
        q = rt / (i + 1)
        if q < 1.0 and w * q / (1.0 - q) <= cut:
            break
        w *= q
        right.append(w)
        i += 1
    left: list[float] = []
    i, w = mode, 1.0
    while i > 0:
        q = i / rt
        if q < 1.0 and w * q / (1.0 - q) <= cut:
            break
        w *= q
        left.append(w)
        i -= 1
    weights = np.array(left[::-1] + right)
    weights /= math.fsum(weights)
    total = math.fsum(weights)
    if total > 1.0:
        weights *= (1.0 - 2.0 ** -52) / total
    return i, i + len(weights) - 1, weights


# -- hot kernels -----------------------------------------------------------------


@njit
def _uniformization_sum_nb(indptr, indices, data, p0, left, weights):
    # rows of (indptr, indices, data) are columns of P-bar: out = v @ P-bar
    n = p0.shape[0]
    v = p0.copy()
    nxt = np.empty(n)
    acc = np.zeros(n)
    right = left + weights.shape[0] - 1
    for step in range(right + 1):
        if step >= left:
            w = weights[step - left]
            for s in range(n):
                acc[s] += w * v[s]
        if step == right:
            break
        for j in range(n):
            total = 0.0
            for k in range(indptr[j], indptr[j + 1]):
                total += data[k] * v[indices[k]]
            nxt[j] = total
        v, nxt = nxt, v
    return acc


def _uniformization_sum_np(pbar_t, p0, left, weights):
    v = p0.copy()
    acc = np.zeros_like(p0)
    right = left + len(weights) - 1
    for step in range(right + 1):
        if step >= left:
            acc += weights[step - left] * v
        if step < right:
            v = pbar_t @ v
    return acc


def uniformization_sum(pbar: sp.csr_matrix, p0: np.ndarray, left: int, weights: np.ndarray) -> np.ndarray:
    """``sum_i w_i * p0 @ pbar**i`` over the truncation window."""
    pbar_t = pbar.T.tocsr()
    pbar_t.sort_indices()
    if USE_NUMBA:
        return _uniformization_sum_nb(
            pbar_t.indptr.astype(np.int64), pbar_t.indices.astype(np.int64), pbar_t.data, p0, left, weights
        )
    return _uniformization_sum_np(pbar_t, p0, left, weights)


def transient(ctmc: CtmcSparse, t: float, tol: float = DEFAULT_TOL) -> TransientResult:
    """State distribution at time ``t`` from the initial state, by uniformization."""
    if t < 0:
        raise ValueError("t must be >= 0")
    p0 = np.zeros(ctmc.n_states)
    p0[ctmc.initial] = 1.0
    uni = uniformize(ctmc)
    if t == 0 or uni.degenerate:
        dist, window = p0, (0, 0)
    else:
        left, right, weights = poisson_weights(uni.rate * t, tol)
        dist = uniformization_sum(uni.pbar, p0, left, weights)
        window = (left, right)
    goal = float(dist[sorted(ctmc.goal)].sum()) if ctmc.goal else 0.0
    return TransientResult(float(t), dist, goal, window, tol, uni.rate)


def unreliability(ctmc: CtmcSparse, times, tol: float = DEFAULT_TOL) -> np.ndarray:
    return np.array([transient(ctmc, float(t), tol).goal_probability for t in np.atleast_1d(times)])


# -- absorption ------------------------------------------------------------------


def _can_reach(ctmc: CtmcSparse, targets: set[int], taboo: set[int]) -> np.ndarray:
    """States with a positive-probability path into ``targets`` that avoids ``taboo``."""
    rev = ctmc.rate_matrix.T.tocsr()
    mark = np.zeros(ctmc.n_states, dtype=bool)
    stack = list(targets)
    mark[stack] = True
    while stack:
        s = stack.pop()
        for p in rev.indices[rev.indptr[s]:rev.indptr[s + 1]]:
            if not mark[p] and p not in taboo and p not in targets:
                mark[p] = True
                stack.append(int(p))
    return mark


def absorption_probabilities(ctmc: CtmcSparse, targets, taboo=()) -> np.ndarray:
    """Probability, per start state, that the jump chain hits ``targets`` before ``taboo``.

    Target states score 1; taboo states and states that cannot reach a
    target score 0.  The remaining unknowns solve ``(I - P_uu) x = P_ut 1``,
    which is non-singular once the dead states are removed.
    """
    targets = {int(s) for s in targets}
    taboo = {int(s) for s in taboo}
    if targets & taboo:
        raise ValueError("targets and taboo overlap")
    n = ctmc.n_states
    x = np.zeros(n)
    if not targets:
        return x
    x[list(targets)] = 1.0
    reach = _can_reach(ctmc, targets, taboo)
    unknown = np.flatnonzero(reach & ~np.isin(np.arange(n), list(targets)))
    if unknown.size == 0:
        return x
    P = ctmc.embedded
    Puu = P[unknown][:, unknown]
    b = np.asarray(P[unknown][:, sorted(targets)].sum(axis=1)).ravel()
    A = (sp.identity(unknown.size, format="csr") - Puu).tocsc()
    if unknown.size < DIRECT_SOLVE_LIMIT:
        sol = spla.spsolve(A, b)
    else:
        sol, info = spla.gmres(A, b, rtol=1e-12, atol=0.0, restart=200, maxiter=10_000)
        if info != 0:
            raise SolverError(f"iterative absorption solve did not converge (info={info})")
    sol = np.atleast_1d(np.asarray(sol, dtype=float))
    if not np.all(np.isfinite(sol)):
        raise SolverError("singular absorption system")
    x[unknown] = np.clip(sol, 0.0, 1.0)
    return x


def absorption_residual(ctmc: CtmcSparse, x: np.ndarray, targets, taboo=()) -> float:
    """Max violation of ``x = P x`` over the states that are neither target nor taboo."""
    fixed = set(int(s) for s in targets) | set(int(s) for s in taboo)
    free = np.array([s for s in range(ctmc.n_states) if s not in fixed and ctmc.rate_out[s] > 0], dtype=int)
    if free.size == 0:
        return 0.0
    px = ctmc.embedded @ x
    return float(np.max(np.abs(px[free] - x[free])))
