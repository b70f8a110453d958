"""Static structure function and MOCUS-style minimal cut sets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

from .model import AND, DET, ERLANG, EXP, ONDEMAND, OR, Bdmp, Leaf, ModelError


@dataclass(frozen=True)
class Lit:
    name: str


@dataclass(frozen=True)
class Op:
    kind: str  # "and" | "or"
    children: tuple["Formula", ...]


Formula = Union[Lit, Op]


def f_and(*children: Formula) -> Formula:
    return _flat(AND, children)


def f_or(*children: Formula) -> Formula:
    return _flat(OR, children)


def _flat(kind: str, children) -> Formula:
    out: list[Formula] = []
    for c in children:
        if isinstance(c, Op) and c.kind == kind:
            out.extend(c.children)
        elif c not in out:
            out.append(c)
    if not out:
        raise ValueError("empty connective")
    return out[0] if len(out) == 1 else Op(kind, tuple(out))


def literals(formula: Formula) -> list[str]:
    """Leaf names in first-occurrence order."""
    seen: dict[str, None] = {}

    def walk(f: Formula) -> None:
        if isinstance(f, Lit):
            seen.setdefault(f.name)
        else:
            for c in f.children:
                walk(c)

    walk(formula)
    return list(seen)


def evaluate(formula: Formula, true_leaves) -> bool:
    if isinstance(formula, Lit):
        return formula.name in true_leaves
    if formula.kind == AND:
        return all(evaluate(c, true_leaves) for c in formula.children)
    return any(evaluate(c, true_leaves) for c in formula.children)


def to_text(formula: Formula) -> str:
    if isinstance(formula, Lit):
        return formula.name
    return f"{formula.kind.upper()}(" + ", ".join(to_text(c) for c in formula.children) + ")"


def structure_function(model: Bdmp) -> Formula:
    """Static reading of the model: PAND becomes AND and triggers are dropped."""
    memo: dict[str, Formula] = {}

    def build(node: str) -> Formula:
        if node in memo:
            return memo[node]
        gate = model.gate_map.get(node)
        if gate is None:
            out: Formula = Lit(node)
        else:
            kids = [build(c) for c in gate.children]
            out = f_or(*kids) if gate.kind == OR else f_and(*kids)
        memo[node] = out
        return out

    model.compiled  # validates
    return build(model.top)


# -- MOCUS ---------------------------------------------------------------------------


def _cut_count(formula: Formula, memo: dict) -> float:
    """Upper bound on the number of cut sets a subformula expands into."""
    key = id(formula)
    if key not in memo:
        if isinstance(formula, Lit):
            memo[key] = 1.0
        elif formula.kind == OR:
            memo[key] = math.fsum(_cut_count(c, memo) for c in formula.children)
        else:
            memo[key] = math.prod(_cut_count(c, memo) for c in formula.children)
    return memo[key]


def minimize(sets: Iterable[frozenset]) -> list[frozenset]:
    """Drop duplicates and supersets; output sorted by size, then names."""
    ordered = sorted(set(sets), key=lambda s: (len(s), sorted(s)))
    kept: list[frozenset] = []
    for s in ordered:
        if not any(k <= s for k in kept):
            kept.append(s)
    return kept


def failure_rate_bound(leaf: Leaf) -> float:
    """Rate dominating the time-to-failure of an operating leaf."""
    if leaf.kind == EXP:
        return leaf.lambda_active
    if leaf.kind == ERLANG:
        return leaf.lambda_active + (leaf.erlang_rate or 0.0)
    raise ModelError(f"leaf {leaf.id!r} has no exponential bound")


@dataclass
class MocusResult:
    sets: list[frozenset]          # every minimal cut set that survived the cutoff
    cut_sets: list                 # CutSet objects with exactly one initiator
    diagnostics: list[str] = field(default_factory=list)
    discarded_bound: float = 0.0   # bound on the summed frequency of pruned cut sets
    pruned_rows: int = 0


class _Estimator:
    """Conservative frequency of any cut set extending a partial one."""

    def __init__(self, leaves: Mapping[str, Leaf], universe: Iterable[str]):
        self.leaves = leaves
        inits = [leaves[n] for n in universe if n in leaves and leaves[n].initiator]
        self.max_lam = max((l.lambda_active for l in inits), default=0.0)
        self.min_mu = min((l.mu for l in inits), default=0.0)

    def __call__(self, known: frozenset) -> float:
        inits = [n for n in known if self.leaves[n].initiator]
        if len(inits) > 1:
            return 0.0
        if inits:
            lam, mu = self.leaves[inits[0]].lambda_active, self.leaves[inits[0]].mu
        else:
            lam, mu = self.max_lam, self.min_mu
        est = lam
        in_function = []
        for n in sorted(known):
            leaf = self.leaves[n]
            if n in inits:
                continue
            if leaf.kind == ONDEMAND:
                est *= leaf.gamma
            elif leaf.kind != DET:
                in_function.append(failure_rate_bound(leaf))
        if in_function and mu > 0.0:
            k = len(in_function)
            # P(all fail within an Exp(mu) repair) <= prod(lam_k) * E[T^k]
            est *= min(1.0, math.prod(in_function) * math.factorial(k) / mu ** k)
        return est


def mocus_mcs(
    formula: Formula,
    leaves: Mapping[str, Leaf] | Iterable[str],
    cutoff: float = 0.0,
    t: float = 1.0,
) -> MocusResult:
    """Top-down expansion of ``formula`` into minimal cut sets.

    ``leaves`` maps leaf ids to their parameters (a model's ``leaf_map``),
    or is just the collection of initiator ids when no quantification is
    needed.  A partial row is pruned when its conservative frequency times
    ``t`` drops below ``cutoff``; the pruned frequency is bounded by the
    estimate times the number of cut sets the row could still produce.
    """
    from .iab import cut_set_from_leaves

    if not isinstance(leaves, Mapping):
        flagged = set(leaves)
        leaves = {n: Leaf(n, EXP, lambda_active=1.0, initiator=n in flagged) for n in literals(formula)}
    names = literals(formula)
    missing = [n for n in names if n not in leaves]
    if missing:
        raise ModelError(f"no parameters for leaves {missing}")
    if not any(leaves[n].initiator for n in names):
        raise ModelError("no initiator-flagged leaf in the formula")
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    estimate = _Estimator(leaves, names)
    counts: dict = {}

    found: list[frozenset] = []
    bound = 0.0
    pruned = 0
    stack: list[tuple[frozenset, tuple[Formula, ...]]] = [(frozenset(), (formula,))]
    while stack:
        known, pending = stack.pop()
        # absorb literals first so the estimate sees them
        lits = {p.name for p in pending if isinstance(p, Lit)}
        if lits:
            known = known | lits
            pending = tuple(p for p in pending if isinstance(p, Op))
        if cutoff > 0.0:
            est = estimate(known)
            if est * t < cutoff:
                pruned += 1
                bound += est * math.prod(_cut_count(p, counts) for p in pending)
                continue
        if not pending:
            found.append(known)
            continue
        gate, rest = pending[0], pending[1:]
        if gate.kind == AND:
            stack.append((known, gate.children + rest))
        else:
            for child in reversed(gate.children):
                stack.append((known, (child,) + rest))

    sets = minimize(found)
    cut_sets, diagnostics = [], []
    for s in sets:
        inits = sorted(n for n in s if leaves[n].initiator)
        if len(inits) != 1:
            what = "no initiator" if not inits else f"several initiators {inits}"
            diagnostics.append(f"cut set {{{', '.join(sorted(s))}}} discarded: {what}")
            continue
        cut_sets.append(cut_set_from_leaves(leaves[inits[0]], [leaves[n] for n in sorted(s) if n != inits[0]]))
    return MocusResult(sets, cut_sets, diagnostics, bound, pruned)


def minimal_true_points(formula: Formula) -> list[frozenset]:
    """Truth-table enumeration; exponential, meant as an oracle for small formulas."""
    names = literals(formula)
    if len(names) > 20:
        raise ValueError("too many leaves for a truth table")
    points = []
    for mask in range(1 << len(names)):
        chosen = frozenset(n for i, n in enumerate(names) if mask >> i & 1)
        if evaluate(formula, chosen):
            points.append(chosen)
    return minimize(points)
