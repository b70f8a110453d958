"""Event-driven Monte Carlo on BDMP semantics.

Each trial keeps one pending clock per leaf (failure, phase advance, battery
depletion or repair) and jumps to the earliest.  Exponential clocks are only
redrawn when their rate changes, which is exact by memorylessness.  Random
numbers come from a counter-based splitmix64 stream keyed by
``(seed, trial)``, so results do not depend on how trials are split between
workers.
"""
from __future__ import annotations

import math
import os
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ._accel import USE_NUMBA, njit
from .ctmc import TransitionLabel
from .model import DET, ERLANG, EXP, ONDEMAND, Bdmp

OPTIMISTIC, PESSIMISTIC = "optimistic", "pessimistic"
THREADS_ENV = "BDMPQ_THREADS"
LOG_CAPACITY = 4096

_EXP, _ONDEMAND, _ERLANG, _DET = 0, 1, 2, 3
_AND, _OR, _PAND = 0, 1, 2
_EV_FAIL, _EV_REPAIR, _EV_PHASE, _EV_DEMAND = 0, 1, 2, 3

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


# -- random numbers ------------------------------------------------------------------


def _mix_py(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def trial_key(seed: int, trial: int) -> int:
    """Initial generator state of one trial."""
    return _mix_py((_mix_py((seed + _GOLDEN) & _MASK) ^ trial) & _MASK)


def _uniform_py(rng) -> float:
    s = (int(rng[0]) + _GOLDEN) & _MASK
    rng[0] = s
    return (_mix_py(s) >> 11) * 2.0 ** -53


@njit(inline="always")
def _uniform_nb(rng):
    s = rng[0] + np.uint64(_GOLDEN)
    rng[0] = s
    z = (s ^ (s >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    z = z ^ (z >> np.uint64(31))
    return float(z >> np.uint64(11)) * 1.1102230246251565e-16


@njit(inline="always")
def _trial_key_nb(seed, trial):
    s = np.uint64(seed) + np.uint64(_GOLDEN)
    z = (s ^ (s >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    z = (z ^ (z >> np.uint64(31))) ^ np.uint64(trial)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


_uniform = _uniform_nb if USE_NUMBA else _uniform_py
_trial_key = _trial_key_nb if USE_NUMBA else trial_key


@njit(inline="always")
def _exp_draw(rng, rate):
    return -math.log1p(-_uniform(rng)) / rate


# -- one trial -----------------------------------------------------------------------


@njit(inline="always")
def _evaluate(val, old, pand, failed, L, gate_kind, child_ptr, child_idx, gate_order, pand_slot, use_old):
    for i in range(L):
        val[i] = failed[i]
    for g in gate_order:
        k = gate_kind[g]
        a, b = child_ptr[g], child_ptr[g + 1]
        if k == _AND:
            v = True
            for j in range(a, b):
                if not val[child_idx[j]]:
                    v = False
                    break
        elif k == _OR:
            v = False
            for j in range(a, b):
                if val[child_idx[j]]:
                    v = True
                    break
        else:
            slot = pand_slot[g]
            p = pand[slot]
            if use_old:
                for j in range(a, b):
                    c = child_idx[j]
                    if old[c] and not val[c] and j - a < p:
                        p = j - a
                for j in range(a, b):
                    c = child_idx[j]
                    if val[c] and not old[c] and j - a == p:
                        p = j - a + 1
            pand[slot] = p
            v = p == b - a
        val[L + g] = v


@njit(inline="always")
def _activate(act, val, top, act_order, par_ptr, par_idx, trig_ptr, trig_org):
    for n in act_order:
        if n == top:
            act[n] = True
            continue
        a = par_ptr[n] == par_ptr[n + 1]
        for j in range(par_ptr[n], par_ptr[n + 1]):
            if act[par_idx[j]]:
                a = True
                break
        if a and trig_ptr[n] < trig_ptr[n + 1]:
            a = False
            for j in range(trig_ptr[n], trig_ptr[n + 1]):
                if val[trig_org[j]]:
                    a = True
                    break
        act[n] = a


@njit(nogil=True, error_model="numpy")
def _run_trials(start, count, seed, horizon, pessimistic, model, fail_times, log, record):
    """Run trials ``start .. start+count-1``; returns the number that failed.

    ``fail_times[k]`` receives the failure time of trial ``start+k`` or -1
    if the top event stays false up to ``horizon``.  With ``record`` the
    events since the last all-working state are written to ``log`` as
    ``leaf * 4 + event``; the count for the last trial is returned second.
    """
    (L, top, kind, lam_a, lam_s, gamma, erl_k, erl_rate, duration, mu,
     gate_kind, child_ptr, child_idx, gate_order, pand_slot, n_pand,
     act_order, par_ptr, par_idx, trig_ptr, trig_org,
     group_of, grp_ptr, grp_idx, n_groups) = model
    N = act_order.shape[0]
    rng = np.zeros(1, dtype=np.uint64)
    failed = np.zeros(L, dtype=np.bool_)
    phase = np.zeros(L, dtype=np.int64)
    pand = np.zeros(max(n_pand, 1), dtype=np.int64)
    val = np.zeros(N, dtype=np.bool_)
    old = np.zeros(N, dtype=np.bool_)
    act = np.zeros(N, dtype=np.bool_)
    old_act = np.zeros(N, dtype=np.bool_)
    clk_t = np.zeros(L)
    clk_rate = np.zeros(L)
    rep_on = np.zeros(L, dtype=np.bool_)
    busy = np.zeros(max(n_groups, 1), dtype=np.bool_)
    fail_seq = np.zeros(L, dtype=np.int64)
    used = np.zeros(L)
    since = np.zeros(L)
    det_on = np.zeros(L, dtype=np.bool_)
    cap = log.shape[0]
    failures = 0
    n_log = 0

    for trial_k in range(count):
        rng[0] = _trial_key(seed, start + trial_k)
        for i in range(L):
            failed[i] = False
            phase[i] = 0
            clk_t[i] = np.inf
            clk_rate[i] = -1.0
            rep_on[i] = False
            used[i] = 0.0
            det_on[i] = False
        for i in range(pand.shape[0]):
            pand[i] = 0
        for i in range(busy.shape[0]):
            busy[i] = False
        n_failed = 0
        seq = 0
        n_log = 0
        fail_at = -1.0

        _evaluate(val, old, pand, failed, L, gate_kind, child_ptr, child_idx, gate_order, pand_slot, False)
        _activate(act, val, top, act_order, par_ptr, par_idx, trig_ptr, trig_org)
        now = 0.0
        while fail_at < 0.0:
            # (re)arm clocks
            for i in range(L):
                k = kind[i]
                if failed[i]:
                    if mu[i] > 0.0 and not rep_on[i]:
                        g = group_of[i]
                        head = True
                        if g >= 0:
                            if busy[g]:
                                head = False
                            else:
                                for j in range(grp_ptr[g], grp_ptr[g + 1]):
                                    m = grp_idx[j]
                                    if failed[m] and not rep_on[m] and fail_seq[m] < fail_seq[i]:
                                        head = False
                                        break
                        if head:
                            rep_on[i] = True
                            if g >= 0:
                                busy[g] = True
                            clk_t[i] = now + _exp_draw(rng, mu[i])
                elif k == _EXP or k == _ERLANG:
                    if k == _EXP:
                        r = lam_a[i] if act[i] else lam_s[i]
                    else:
                        r = lam_a[i] + erl_rate[i] if act[i] else 0.0
                    if r != clk_rate[i]:
                        clk_rate[i] = r
                        clk_t[i] = now + _exp_draw(rng, r) if r > 0.0 else np.inf
                elif k == _DET:
                    if act[i] and not det_on[i]:
                        det_on[i] = True
                        since[i] = now
                        d = duration[i] - used[i]
                        if lam_a[i] > 0.0:
                            d = min(d, _exp_draw(rng, lam_a[i]))
                        clk_t[i] = now + d
                    elif det_on[i] and not act[i]:
                        det_on[i] = False
                        used[i] = used[i] + (now - since[i]) if pessimistic else 0.0
                        clk_t[i] = np.inf

            nxt = -1
            best = np.inf
            for i in range(L):
                if clk_t[i] < best:
                    best = clk_t[i]
                    nxt = i
            if nxt < 0 or best > horizon:
                break
            now = best
            i = nxt
            clk_t[i] = np.inf
            clk_rate[i] = -1.0
            ev = _EV_FAIL
            if failed[i]:
                ev = _EV_REPAIR
                failed[i] = False
                rep_on[i] = False
                phase[i] = 0
                used[i] = 0.0
                n_failed -= 1
                if group_of[i] >= 0:
                    busy[group_of[i]] = False
            else:
                k = kind[i]
                if k == _ERLANG and _uniform(rng) * (lam_a[i] + erl_rate[i]) >= lam_a[i]:
                    phase[i] += 1
                    ev = _EV_PHASE if phase[i] < erl_k[i] else _EV_FAIL
                if ev == _EV_FAIL:
                    failed[i] = True
                    phase[i] = 0
                    det_on[i] = False
                    seq += 1
                    fail_seq[i] = seq
                    n_failed += 1
            if record:
                if n_failed == 0 and ev == _EV_REPAIR:
                    n_log = 0
                elif n_log < cap:
                    log[n_log] = i * 4 + ev
                    n_log += 1
                else:
                    n_log = cap + 1

            # instantaneous cascade: structure values, activation, demands
            while True:
                for n in range(N):
                    old[n] = val[n]
                    old_act[n] = act[n]
                _evaluate(val, old, pand, failed, L, gate_kind, child_ptr, child_idx, gate_order, pand_slot, True)
                if val[top]:
                    fail_at = now
                    break
                _activate(act, val, top, act_order, par_ptr, par_idx, trig_ptr, trig_org)
                demanded = False
                for j in range(L):
                    if act[j] == old_act[j]:
                        continue
                    if kind[j] == _ERLANG and not act[j]:
                        phase[j] = 0
                    elif kind[j] == _ONDEMAND and act[j] and not failed[j]:
                        if _uniform(rng) < gamma[j]:
                            failed[j] = True
                            seq += 1
                            fail_seq[j] = seq
                            n_failed += 1
                            demanded = True
                            if record and n_log < cap:
                                log[n_log] = j * 4 + _EV_DEMAND
                                n_log += 1
                if not demanded:
                    break
        fail_times[trial_k] = fail_at
        if fail_at >= 0.0:
            failures += 1
    return failures, n_log


# -- public API ----------------------------------------------------------------------


@dataclass(frozen=True)
class DelayLaw:
    kind: str
    rate: float = 0.0
    phases: int = 1
    duration: float = 0.0

    def __post_init__(self):
        if self.kind == "exponential":
            ok = self.rate > 0
        elif self.kind == "erlang":
            ok = self.rate > 0 and self.phases >= 1
        elif self.kind == "deterministic":
            ok = self.duration > 0
        else:
            raise ValueError(f"unknown delay law {self.kind!r}")
        if not ok:
            raise ValueError(f"{self.kind} law needs positive parameters")

    def mean(self) -> float:
        if self.kind == "exponential":
            return 1.0 / self.rate
        if self.kind == "erlang":
            return self.phases / self.rate
        return self.duration


def leaf_laws(model: Bdmp) -> dict[str, dict[str, DelayLaw]]:
    """Active-failure and repair laws per leaf (absent when the event cannot occur)."""
    laws: dict[str, dict[str, DelayLaw]] = {}
    for leaf in model.leaves:
        entry = {}
        if leaf.kind == EXP and leaf.lambda_active > 0:
            entry["failure"] = DelayLaw("exponential", rate=leaf.lambda_active)
        elif leaf.kind == ERLANG:
            entry["failure"] = DelayLaw("erlang", rate=leaf.erlang_rate, phases=leaf.erlang_phases)
        elif leaf.kind == DET:
            entry["failure"] = DelayLaw("deterministic", duration=leaf.duration)
        if leaf.mu > 0:
            entry["repair"] = DelayLaw("exponential", rate=leaf.mu)
        laws[leaf.id] = entry
    return laws


@dataclass(frozen=True)
class SimConfig:
    trials: int
    t: float
    seed: int = 0
    ci_level: float = 0.90
    battery_policy: str = OPTIMISTIC
    workers: int | None = None
    record: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must lie in (0, 1)")
        if self.battery_policy not in (OPTIMISTIC, PESSIMISTIC):
            raise ValueError(f"battery_policy must be {OPTIMISTIC!r} or {PESSIMISTIC!r}")
        if not self.t >= 0:
            raise ValueError("t must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class SimReport:
    estimate: float
    ci_halfwidth: float
    ci_level: float
    trials: int
    failures: int
    seed: int
    t: float
    battery_policy: str
    tallies: list[tuple[tuple[str, ...], int]]
    failure_times: np.ndarray = field(repr=False)
    wall_time: float = 0.0

    def estimate_at(self, t: float) -> float:
        """Fraction of trials failed by ``t`` (only meaningful for ``t <= self.t``)."""
        return float(np.count_nonzero(self.failure_times <= t)) / self.trials

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "ci_halfwidth": self.ci_halfwidth,
            "ci_level": self.ci_level,
            "trials": self.trials,
            "failures": self.failures,
            "seed": self.seed,
            "t": self.t,
            "battery_policy": self.battery_policy,
            "tallies": [{"labels": list(k), "count": c, "rank": r + 1} for r, (k, c) in enumerate(self.tallies)],
        }


def ci_halfwidth(p_hat: float, n: int, level: float = 0.90) -> float:
    """Normal-approximation half width of a two-sided ``level`` interval."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError("p_hat must lie in [0, 1]")
    z = norm.ppf(0.5 + level / 2.0)
    return float(z * math.sqrt(p_hat * (1.0 - p_hat) / n))


def _kernel_args(model: Bdmp) -> tuple:
    cm = model.compiled
    members: list[list[int]] = [[] for _ in range(cm.n_groups)]
    for i, g in enumerate(cm.group_of):
        if g >= 0:
            members[g].append(i)
    grp_ptr = np.zeros(cm.n_groups + 1, dtype=np.int64)
    grp_ptr[1:] = np.cumsum([len(m) for m in members]) if members else []
    grp_idx = np.array([i for m in members for i in m], dtype=np.int64)
    return (
        cm.n_leaves, cm.top, cm.leaf_kind, cm.lam_a, cm.lam_s, cm.gamma, cm.erl_k, cm.erl_rate,
        cm.duration, cm.mu, cm.gate_kind, cm.child_ptr, cm.child_idx, cm.gate_order, cm.pand_slot,
        cm.n_pand, cm.act_order, cm.par_ptr, cm.par_idx, cm.trig_ptr, cm.trig_org,
        cm.group_of, grp_ptr, grp_idx, cm.n_groups,
    )


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _decode(model: Bdmp, log: np.ndarray, n: int) -> tuple[str, ...]:
    """Short labels; demand failures attach to the preceding timed event."""
    ids = model.compiled.leaf_ids
    gamma = model.compiled.gamma
    labels: list[list] = []
    for code in log[:n]:
        leaf, ev = divmod(int(code), 4)
        if ev == _EV_DEMAND and labels:
            labels[-1][2].append((ids[leaf], True, float(gamma[leaf])))
            continue
        event = {_EV_FAIL: "failure", _EV_REPAIR: "repair", _EV_PHASE: "phase_advance", _EV_DEMAND: "failure"}[ev]
        labels.append([ids[leaf], event, []])
    return tuple(TransitionLabel(a, b, tuple(c)).short() for a, b, c in labels)


def simulate(model: Bdmp, config: SimConfig) -> SimReport:
    """Estimate the probability that the top event occurs by ``config.t``."""
    model.compiled  # validates
    started = time.perf_counter()
    args = _kernel_args(model)
    pess = config.battery_policy == PESSIMISTIC
    n = config.trials
    workers = max(1, min(config.workers or default_workers(), n))
    times = np.empty(n)
    bounds = np.linspace(0, n, workers + 1).astype(np.int64)
    no_log = np.empty(1, dtype=np.int64)

    def run(w: int) -> int:
        a, b = int(bounds[w]), int(bounds[w + 1])
        return _run_trials(a, b - a, config.seed, float(config.t), pess, args, times[a:b], no_log, False)[0]

    if workers == 1 or not USE_NUMBA:
        failures = sum(run(w) for w in range(workers))
    else:
        with ThreadPoolExecutor(workers) as pool:
            failures = sum(pool.map(run, range(workers)))

    tallies: list[tuple[tuple[str, ...], int]] = []
    if config.record and failures:
        counts: Counter = Counter()
        log = np.empty(LOG_CAPACITY, dtype=np.int64)
        one = np.empty(1)
        for trial in np.flatnonzero(times >= 0.0):
            _, n_log = _run_trials(int(trial), 1, config.seed, float(config.t), pess, args, one, log, True)
            if n_log <= LOG_CAPACITY:
                counts[_decode(model, log, n_log)] += 1
        tallies = sorted(((k, c) for k, c in counts.items() if c >= 2), key=lambda kc: (-kc[1], kc[0]))

    fail_times = np.sort(times[times >= 0.0])
    p = failures / n
    return SimReport(
        estimate=p,
        ci_halfwidth=ci_halfwidth(p, n, config.ci_level),
        ci_level=config.ci_level,
        trials=n,
        failures=int(failures),
        seed=config.seed,
        t=float(config.t),
        battery_policy=config.battery_policy,
        tallies=tallies,
        failure_times=fail_times,
        wall_time=time.perf_counter() - started,
    )
