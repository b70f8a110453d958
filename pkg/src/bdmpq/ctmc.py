"""Explicit sparse CTMC container and its line-oriented text format.

Text format::

    ctmc <nstates> <ntransitions>
    <src> <dst> <rate> <label>        (one line per transition)
    init 0
    goal <i> <j> ...                  (omitted when there are no goal states)
    state <i> <name>                  (optional, one per state)
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence, TextIO

import numpy as np
import scipy.sparse as sp


class CtmcFormatError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class TransitionLabel:
    leaf: str
    event: str
    # (leaf, failed?, probability factor) for every demand resolved during the jump
    demand_outcomes: tuple[tuple[str, bool, float], ...] = ()

    @property
    def sort_key(self) -> tuple:
        return (self.leaf, self.event, tuple((d[0], d[1]) for d in self.demand_outcomes))

    @property
    def is_repair(self) -> bool:
        return self.event == "repair"

    def token(self) -> str:
        text = f"{self.leaf}/{self.event}"
        if self.demand_outcomes:
            parts = [f"{leaf}={'F' if failed else 'W'}:{factor!r}" for leaf, failed, factor in self.demand_outcomes]
            text += "{" + ",".join(parts) + "}"
        return text

    def short(self) -> str:
        """Compact human label, e.g. ``S1`` for a failure, ``S1^`` for a repair."""
        mark = {"failure": "", "repair": "^", "phase_advance": "+"}.get(self.event, "?")
        extra = "".join(f"[{leaf}{'!' if failed else ''}]" for leaf, failed, _ in self.demand_outcomes if failed)
        return f"{self.leaf}{mark}{extra}"

    @classmethod
    def parse(cls, token: str) -> "TransitionLabel":
        head, brace, rest = token.partition("{")
        leaf, slash, event = head.partition("/")
        if not slash or not leaf or not event:
            raise CtmcFormatError(f"bad transition label {token!r}")
        outcomes = []
        if brace:
            if not rest.endswith("}"):
                raise CtmcFormatError(f"bad transition label {token!r}")
            for part in rest[:-1].split(","):
                name, _, tail = part.partition("=")
                flag, _, factor = tail.partition(":")
                outcomes.append((name, flag == "F", float(factor)))
        return cls(leaf, event, tuple(outcomes))

    def __str__(self) -> str:
        return self.token()


class Transition(NamedTuple):
    src: int
    rate: float
    dst: int
    label: TransitionLabel


@dataclass(frozen=True, eq=False)
class CtmcSparse:
    """Explicit state space. State 0 is the initial state."""

    states: Sequence
    names: Sequence[str]
    transitions: Sequence[Transition]
    goal: frozenset[int] = field(default_factory=frozenset)

    initial = 0

    @property
    def n_states(self) -> int:
        return len(self.names)

    @property
    def n_transitions(self) -> int:
        return len(self.transitions)

    @cached_property
    def rate_matrix(self) -> sp.csr_matrix:
        """R(s, s'); parallel transitions are summed."""
        n = self.n_states
        if not self.transitions:
            return sp.csr_matrix((n, n))
        src = np.fromiter((t.src for t in self.transitions), dtype=np.int64, count=len(self.transitions))
        dst = np.fromiter((t.dst for t in self.transitions), dtype=np.int64, count=len(self.transitions))
        rate = np.fromiter((t.rate for t in self.transitions), dtype=np.float64, count=len(self.transitions))
        mat = sp.csr_matrix((rate, (src, dst)), shape=(n, n))
        mat.sum_duplicates()
        return mat

    @cached_property
    def rate_out(self) -> np.ndarray:
        out = np.zeros(self.n_states)
        for t in self.transitions:
            out[t.src] += t.rate
        return out

    @cached_property
    def embedded(self) -> sp.csr_matrix:
        """Jump-chain probabilities P(s, s') = R(s, s') / r(s); absorbing rows stay empty."""
        r = self.rate_out
        inv = np.divide(1.0, r, out=np.zeros_like(r), where=r > 0)
        return sp.diags(inv) @ self.rate_matrix

    def outgoing(self) -> list[list[Transition]]:
        rows: list[list[Transition]] = [[] for _ in range(self.n_states)]
        for t in self.transitions:
            rows[t.src].append(t)
        return rows

    def goal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.goal)] = True
        return mask

    def same_as(self, other: "CtmcSparse") -> bool:
        return (
            list(self.names) == list(other.names)
            and list(self.transitions) == list(other.transitions)
            and self.goal == other.goal
        )


def ctmc_from_rates(
    edges: Iterable[tuple[int, int, float]], n_states: int, goal: Iterable[int] = (), names=None
) -> CtmcSparse:
    """Small helper for hand-made chains: edges are ``(src, dst, rate)``."""
    transitions = [
        Transition(int(s), float(r), int(d), TransitionLabel(f"e{k}", "failure"))
        for k, (s, d, r) in enumerate(edges)
    ]
    names = list(names) if names is not None else [f"s{i}" for i in range(n_states)]
    return CtmcSparse(list(names), names, transitions, frozenset(int(g) for g in goal))


def export_ctmc(ctmc: CtmcSparse, sink: TextIO | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"ctmc {ctmc.n_states} {ctmc.n_transitions}\n")
    for t in ctmc.transitions:
        buf.write(f"{t.src} {t.dst} {t.rate:.17e} {t.label.token()}\n")
    buf.write(f"init {ctmc.initial}\n")
    if ctmc.goal:
        buf.write("goal " + " ".join(str(g) for g in sorted(ctmc.goal)) + "\n")
    for i, name in enumerate(ctmc.names):
        buf.write(f"state {i} {name}\n")
    text = buf.getvalue()
    if sink is not None:
        sink.write(text)
    return text


def import_ctmc(source: str | TextIO) -> CtmcSparse:
    text = source if isinstance(source, str) else source.read()
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0][0] != "ctmc" or len(lines[0]) != 3:
        raise CtmcFormatError("missing 'ctmc <nstates> <ntransitions>' header")
    n, m = int(lines[0][1]), int(lines[0][2])
    if len(lines) < 2 + m:
        raise CtmcFormatError("truncated transition section")
    transitions = []
    for parts in lines[1:1 + m]:
        if len(parts) != 4:
            raise CtmcFormatError(f"bad transition line {' '.join(parts)!r}")
        src, dst = int(parts[0]), int(parts[1])
        if not (0 <= src < n and 0 <= dst < n):
            raise CtmcFormatError(f"state index out of range in {' '.join(parts)!r}")
        transitions.append(Transition(src, float(parts[2]), dst, TransitionLabel.parse(parts[3])))
    rest = lines[1 + m:]
    if not rest or rest[0] != ["init", "0"]:
        raise CtmcFormatError("expected 'init 0'")
    goal: frozenset[int] = frozenset()
    names = [f"s{i}" for i in range(n)]
    for parts in rest[1:]:
        if parts[0] == "goal":
            goal = frozenset(int(x) for x in parts[1:])
        elif parts[0] == "state" and len(parts) == 3:
            names[int(parts[1])] = parts[2]
        else:
            raise CtmcFormatError(f"unexpected line {' '.join(parts)!r}")
    return CtmcSparse(list(names), names, transitions, goal)
