"""Random model and chain generators shared by the tests."""
from __future__ import annotations

import numpy as np

from bdmpq.ctmc import ctmc_from_rates
from bdmpq.model import AND, EXP, ONDEMAND, OR, Bdmp, Gate, Leaf, Trigger


def random_chain(rng: np.random.Generator, n: int, density: float = 0.3, goal: bool = True, repairs: bool = True):
    """Random CTMC on ``n`` states; the last state is an absorbing goal when ``goal``."""
    edges = []
    live = n - 1 if goal else n
    for s in range(live):
        for d in range(n):
            if d == s:
                continue
            forward = d > s
            if (forward or repairs) and rng.random() < density:
                scale = 1.0 if forward else 5.0
                edges.append((s, d, float(rng.uniform(0.05, 1.0) * scale)))
        if not any(e[0] == s for e in edges):
            edges.append((s, s + 1 if s + 1 < n else 0, float(rng.uniform(0.05, 1.0))))
    return ctmc_from_rates(edges, n, goal=[n - 1] if goal else [])


def standby_model(rng: np.random.Generator, functions: int | None = None) -> Bdmp:
    """Initiators backed by standby barriers, each function ``AND(I, BACKUP)``.

    Barriers only start operating once the initiator has failed (trigger
    ``I -> BACKUP``), on-demand barriers are demanded at that moment, and
    repairs are independent.
    """
    k = functions or int(rng.integers(1, 4))
    leaves, gates, triggers, tops = [], [], [], []
    for j in range(k):
        init = f"I{j}"
        leaves.append(Leaf(init, EXP, lambda_active=float(rng.uniform(1e-4, 2e-3)),
                           mu=float(rng.uniform(0.02, 0.5)), initiator=True))
        names = []
        for b in range(int(rng.integers(1, 4))):
            name = f"B{j}{b}"
            names.append(name)
            if rng.random() < 0.35:
                leaves.append(Leaf(name, ONDEMAND, gamma=float(rng.uniform(1e-3, 0.1)), mu=float(rng.uniform(0.05, 1.0))))
            else:
                leaves.append(Leaf(name, EXP, lambda_active=float(rng.uniform(1e-4, 5e-3)),
                                   mu=float(rng.uniform(0.05, 1.0))))
        backup = f"BK{j}"
        if len(names) == 3 and rng.random() < 0.5:
            inner = f"BK{j}x"
            gates.append(Gate(inner, AND, tuple(names[1:])))
            gates.append(Gate(backup, OR if rng.random() < 0.5 else AND, (names[0], inner)))
        else:
            gates.append(Gate(backup, AND if rng.random() < 0.7 else OR, tuple(names)))
        gates.append(Gate(f"F{j}", AND, (init, backup)))
        triggers.append(Trigger(init, backup))
        tops.append(f"F{j}")
    if len(tops) == 1:
        top = tops[0]
    else:
        gates.append(Gate("TOP", OR, tuple(tops)))
        top = "TOP"
    return Bdmp(tuple(leaves), tuple(gates), tuple(triggers), top, {})


def spare_chain_model(rng: np.random.Generator, functions: int | None = None) -> Bdmp:
    """Functions shaped like the three-component standby system, with random depth.

    Function ``j`` is ``AND(I_j, BK_j0)`` where ``BK_jk = AND(S_jk, BK_j(k+1))``
    and each spare is triggered by the previous one, so spares take over in
    order; the first spare may be an on-demand start.
    """
    k = functions or int(rng.integers(1, 3))
    leaves, gates, triggers, tops = [], [], [], []
    for j in range(k):
        init = f"I{j}"
        leaves.append(Leaf(init, EXP, lambda_active=float(rng.uniform(2e-4, 2e-3)),
                           mu=float(rng.uniform(0.05, 0.5)), initiator=True))
        spares = [f"S{j}{m}" for m in range(int(rng.integers(2, 5)))]
        for m, name in enumerate(spares):
            if m == 0 and rng.random() < 0.3:
                leaves.append(Leaf(name, ONDEMAND, gamma=float(rng.uniform(0.01, 0.2)), mu=float(rng.uniform(0.05, 0.5))))
            else:
                leaves.append(Leaf(name, EXP, lambda_active=float(rng.uniform(2e-4, 5e-3)),
                                   mu=float(rng.uniform(0.05, 0.5))))
        names = [f"BK{j}{m}" for m in range(len(spares) - 1)]
        for m, gname in enumerate(names):
            rest = names[m + 1] if m + 1 < len(names) else spares[-1]
            gates.append(Gate(gname, AND, (spares[m], rest)))
            triggers.append(Trigger(spares[m], rest))
        gates.append(Gate(f"F{j}", AND, (init, names[0])))
        triggers.append(Trigger(init, names[0]))
        tops.append(f"F{j}")
    if len(tops) == 1:
        top = tops[0]
    else:
        gates.append(Gate("TOP", OR, tuple(tops)))
        top = "TOP"
    return Bdmp(tuple(leaves), tuple(gates), tuple(triggers), top, {})


def random_formula(rng: np.random.Generator, n_leaves: int, max_depth: int = 4):
    """Random coherent AND/OR formula over ``x0..x{n-1}``; leaves may repeat."""
    from bdmpq.cutsets import Lit, f_and, f_or

    names = [f"x{i}" for i in range(n_leaves)]

    def build(depth: int):
        if depth >= max_depth or rng.random() < 0.3:
            return Lit(names[int(rng.integers(n_leaves))])
        children = [build(depth + 1) for _ in range(int(rng.integers(2, 4)))]
        return (f_and if rng.random() < 0.5 else f_or)(*children)

    # every leaf shows up at least once
    parts = [Lit(n) for n in names] + [build(1) for _ in range(int(rng.integers(1, 4)))]
    rng.shuffle(parts)
    groups = np.array_split(np.array(parts, dtype=object), max(1, len(parts) // 3))
    mix = [(f_and if rng.random() < 0.5 else f_or)(*g) if len(g) > 1 else g[0] for g in groups]
    return (f_or if rng.random() < 0.5 else f_and)(*mix) if len(mix) > 1 else mix[0]
