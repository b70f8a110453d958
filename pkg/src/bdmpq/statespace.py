"""BDMP semantics and explicit CTMC generation.

A state holds the failed/working status of each leaf, the Erlang phase of
each phase-type leaf, the in-order prefix length of each PAND gate and the
FCFS queue of each repair group.  Instantaneous on-demand failures are
resolved inside the timed jump that activates them, so every generated state
is tangible.

Conventions fixed here:

* a node is active when it is the top, or when some gate parent is active
  (nodes without gate parents count as having an active parent); a trigger
  target additionally needs at least one trigger origin whose structure
  value is true;
* an Erlang leaf loses its accumulated phases when it is deactivated;
* a PAND prefix shrinks to ``min(prefix, i)`` when child ``i`` (0-based)
  turns false and grows by one when child ``prefix`` turns true; children
  turning true in the same instant are taken in declaration order;
* relevant-event filtering drops a failure of a leaf when every upward path
  from it reaches a gate that is already true before reaching the top or a
  trigger origin.
"""
from __future__ import annotations

import itertools
import warnings
from collections import deque
from dataclasses import dataclass

from .ctmc import CtmcSparse, Transition, TransitionLabel
from .model import Bdmp, CompiledModel, ModelError

_EXP, _ONDEMAND, _ERLANG, _DET = 0, 1, 2, 3
_AND, _OR, _PAND = 0, 1, 2


class StateSpaceOverflow(RuntimeError):
    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"state space exceeded max_states={limit} ({count} states discovered)")


class ActivationLoopError(ModelError):
    pass


@dataclass(frozen=True)
class SystemState:
    failed: tuple[bool, ...]
    phase: tuple[int, ...]
    pand: tuple[int, ...]
    queues: tuple[tuple[int, ...], ...]


def initial_state(model: Bdmp) -> SystemState:
    cm = model.compiled
    return SystemState(
        (False,) * cm.n_leaves, (0,) * cm.n_leaves, (0,) * cm.n_pand, ((),) * cm.n_groups
    )


class _Semantics:
    """Plain-list view of a compiled model; the builder's inner loops run on it."""

    def __init__(self, cm: CompiledModel):
        self.cm = cm
        self.L = cm.n_leaves
        self.N = cm.n_nodes
        self.top = cm.top
        self.kind = cm.leaf_kind.tolist()
        self.lam_a = cm.lam_a.tolist()
        self.lam_s = cm.lam_s.tolist()
        self.gamma = cm.gamma.tolist()
        self.erl_k = cm.erl_k.tolist()
        self.erl_rate = cm.erl_rate.tolist()
        self.mu = cm.mu.tolist()
        self.group_of = cm.group_of.tolist()
        self.gate_kind = cm.gate_kind.tolist()
        self.pand_slot = cm.pand_slot.tolist()
        self.children = [
            cm.child_idx[cm.child_ptr[g]:cm.child_ptr[g + 1]].tolist() for g in range(cm.n_gates)
        ]
        self.parents = [cm.par_idx[cm.par_ptr[n]:cm.par_ptr[n + 1]].tolist() for n in range(self.N)]
        self.origins = [cm.trig_org[cm.trig_ptr[n]:cm.trig_ptr[n + 1]].tolist() for n in range(self.N)]
        self.is_origin = cm.is_origin.tolist()
        self.gate_order = cm.gate_order.tolist()
        self.act_order = cm.act_order.tolist()
        self.leaf_ids = cm.leaf_ids

    def values(self, failed, pand, old=None):
        """Structure values of all nodes; PAND prefixes advance against ``old``."""
        L = self.L
        val = list(failed) + [False] * (self.N - L)
        pand = list(pand)
        for g in self.gate_order:
            ch = self.children[g]
            k = self.gate_kind[g]
            if k == _AND:
                v = all(val[c] for c in ch)
            elif k == _OR:
                v = any(val[c] for c in ch)
            else:
                slot = self.pand_slot[g]
                p = pand[slot]
                if old is not None:
                    for j, c in enumerate(ch):
                        if old[c] and not val[c] and j < p:
                            p = j
                    for j, c in enumerate(ch):
                        if val[c] and not old[c] and j == p:
                            p = j + 1
                pand[slot] = p
                v = p == len(ch)
            val[L + g] = v
        return val, pand

    def activation(self, val):
        act = [False] * self.N
        for n in self.act_order:
            if n == self.top:
                act[n] = True
                continue
            ps = self.parents[n]
            a = any(act[p] for p in ps) if ps else True
            origins = self.origins[n]
            if origins and a:
                a = any(val[o] for o in origins)
            act[n] = a
        return act

    def relevance(self, val):
        rel = [False] * self.N
        for n in self.act_order:
            if val[n]:
                continue
            rel[n] = n == self.top or self.is_origin[n] or any(rel[p] for p in self.parents[n])
        return rel

    # -- transitions -------------------------------------------------------

    def timed_events(self, st: SystemState, val, act, filtering: bool):
        """``(rate, leaf, event)`` for every enabled timed event of ``st``."""
        rel = self.relevance(val) if filtering else None
        events = []
        for i in range(self.L):
            kind = self.kind[i]
            if not st.failed[i]:
                relevant = rel is None or rel[i]
                if kind == _EXP:
                    rate = self.lam_a[i] if act[i] else self.lam_s[i]
                    if rate > 0.0 and relevant:
                        events.append((rate, i, "failure"))
                elif kind == _ERLANG and act[i]:
                    if self.lam_a[i] > 0.0 and relevant:
                        events.append((self.lam_a[i], i, "failure"))
                    last = st.phase[i] + 1 == self.erl_k[i]
                    if self.erl_rate[i] > 0.0 and (relevant or not last):
                        events.append((self.erl_rate[i], i, "phase_advance"))
                elif kind == _DET:
                    raise ModelError(
                        f"leaf {self.leaf_ids[i]!r} has a deterministic delay; "
                        "use an erlang leaf for state-space engines"
                    )
            elif self.mu[i] > 0.0:
                g = self.group_of[i]
                if g < 0 or st.queues[g][0] == i:
                    events.append((self.mu[i], i, "repair"))
        return events

    def _fail(self, i, failed, phase, queues):
        failed[i] = True
        phase[i] = 0
        g = self.group_of[i]
        if g >= 0 and self.mu[i] > 0.0:
            queues[g].append(i)

    def jump(self, st: SystemState, val, act, leaf: int, event: str):
        """Apply one timed event and resolve the demand cascade.

        Returns ``[(probability, outcomes, state, is_goal)]``; probabilities sum to 1.
        """
        failed = list(st.failed)
        phase = list(st.phase)
        queues = [list(q) for q in st.queues]
        if event == "failure":
            self._fail(leaf, failed, phase, queues)
        elif event == "phase_advance":
            phase[leaf] += 1
            if phase[leaf] >= self.erl_k[leaf]:
                self._fail(leaf, failed, phase, queues)
        elif event == "repair":
            failed[leaf] = False
            phase[leaf] = 0
            g = self.group_of[leaf]
            if g >= 0:
                queues[g].remove(leaf)
        else:
            raise ValueError(f"unknown event {event!r}")

        results = []
        stack = [(1.0, (), failed, phase, list(st.pand), queues, val, act, frozenset())]
        while stack:
            prob, outs, failed, phase, pand, queues, old_val, old_act, seen = stack.pop()
            new_val, pand = self.values(failed, pand, old_val)
            if new_val[self.top]:
                results.append((prob, outs, _freeze(failed, phase, pand, queues), True))
                continue
            new_act = self.activation(new_val)
            for i in range(self.L):
                if self.kind[i] == _ERLANG and old_act[i] and not new_act[i]:
                    phase[i] = 0
            demands = [
                i for i in range(self.L)
                if self.kind[i] == _ONDEMAND and not failed[i] and new_act[i] and not old_act[i]
            ]
            if not demands:
                results.append((prob, outs, _freeze(failed, phase, pand, queues), False))
                continue
            key = (tuple(failed), tuple(new_act))
            if key in seen:
                raise ActivationLoopError("instantaneous activation cascade revisits a configuration")
            seen = seen | {key}
            for pattern in itertools.product((True, False), repeat=len(demands)):
                p = prob
                step = []
                for i, fails in zip(demands, pattern):
                    factor = self.gamma[i] if fails else 1.0 - self.gamma[i]
                    p *= factor
                    step.append((self.leaf_ids[i], fails, factor))
                if p <= 0.0:
                    continue
                f2, ph2, q2 = list(failed), list(phase), [list(q) for q in queues]
                for i, fails in zip(demands, pattern):
                    if fails:
                        self._fail(i, f2, ph2, q2)
                stack.append((p, outs + tuple(step), f2, ph2, list(pand), q2, new_val, new_act, seen))
        return results

    def successors(self, st: SystemState, filtering: bool):
        val, _ = self.values(st.failed, st.pand)
        act = self.activation(val)
        out = []
        for rate, leaf, event in self.timed_events(st, val, act, filtering):
            for prob, outs, nxt, goal in self.jump(st, val, act, leaf, event):
                label = TransitionLabel(self.leaf_ids[leaf], event, outs)
                out.append((rate * prob, nxt, label, goal))
        out.sort(key=lambda item: item[2].sort_key)
        return out

    def describe(self, st: SystemState) -> str:
        val, _ = self.values(st.failed, st.pand)
        act = self.activation(val)
        parts = []
        for i, name in enumerate(self.leaf_ids):
            text = ("~" if st.failed[i] else "") + name + ("*" if act[i] and not st.failed[i] else "")
            if st.phase[i]:
                text += f":{st.phase[i]}"
            parts.append(text)
        text = ",".join(parts)
        if any(st.pand):
            text += "|pand=" + ".".join(str(p) for p in st.pand)
        if any(st.queues):
            text += "|queue=" + ";".join(
                ".".join(self.leaf_ids[i] for i in q) for q in st.queues
            )
        return text


def _freeze(failed, phase, pand, queues) -> SystemState:
    return SystemState(tuple(failed), tuple(phase), tuple(pand), tuple(tuple(q) for q in queues))


_SEMANTICS: dict[str, _Semantics] = {}


def semantics(model: Bdmp) -> _Semantics:
    sem = _SEMANTICS.get(model.digest)
    if sem is None:
        sem = _SEMANTICS[model.digest] = _Semantics(model.compiled)
    return sem


def structure_value(model: Bdmp, state: SystemState) -> dict[str, bool]:
    sem = semantics(model)
    val, _ = sem.values(state.failed, state.pand)
    return dict(zip(sem.cm.node_ids, val))


def activation(model: Bdmp, state: SystemState) -> dict[str, bool]:
    sem = semantics(model)
    val, _ = sem.values(state.failed, state.pand)
    return dict(zip(sem.cm.node_ids, sem.activation(val)))


def enumerate_transitions(
    model: Bdmp, state: SystemState, filtering: bool = False
) -> list[tuple[float, SystemState, TransitionLabel]]:
    """Outgoing transitions of a non-goal state, sorted by label."""
    sem = semantics(model)
    if structure_value(model, state)[model.top]:
        raise ValueError("goal states are absorbing")
    return [(rate, nxt, label) for rate, nxt, label, _ in sem.successors(state, filtering)]


def build_ctmc(
    model: Bdmp,
    filtering: bool = False,
    max_states: int = 2_000_000,
    merge_goals: bool = True,
) -> CtmcSparse:
    """Breadth-first closure from the all-working state.

    States are numbered in discovery order; successors of a state are visited
    in label order.  With ``merge_goals`` every goal state is lumped into a
    single absorbing state named ``fail``.
    """
    sem = semantics(model)
    if any(k == _DET for k in sem.kind):
        raise ModelError("deterministic delays are not supported by the CTMC builder; use erlang leaves")
    if any(size > 1 for size in sem.cm.group_size):
        warnings.warn("repair groups are encoded as FCFS queues; the state space may grow quickly")

    start = initial_state(model)
    states = [start]
    index = {start: 0}
    goal: set[int] = set()
    fail_index = -1
    transitions: list[Transition] = []
    frontier = deque([0])
    while frontier:
        src = frontier.popleft()
        for rate, nxt, label, is_goal in sem.successors(states[src], filtering):
            if is_goal and merge_goals:
                if fail_index < 0:
                    fail_index = len(states)
                    states.append(nxt)
                    goal.add(fail_index)
                dst = fail_index
            else:
                dst = index.get(nxt, -1)
                if dst < 0:
                    dst = len(states)
                    if dst >= max_states:
                        raise StateSpaceOverflow(dst + 1, max_states)
                    states.append(nxt)
                    index[nxt] = dst
                    if is_goal:
                        goal.add(dst)
                    else:
                        frontier.append(dst)
            transitions.append(Transition(src, rate, dst, label))
    names = ["fail" if i == fail_index else sem.describe(s) for i, s in enumerate(states)]
    return CtmcSparse(states, names, transitions, frozenset(goal))
