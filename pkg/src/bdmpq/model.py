"""BDMP model: leaves, gates, triggers and repair groups.

The model document is UTF-8 JSON with the top-level keys ``leaves``,
``gates``, ``triggers``, ``top`` and ``repair_groups``.  :func:`parse_model`
rejects syntax errors, duplicate ids, unknown references and parameters that
do not belong to a leaf kind.  Every other structural rule is reported as data
by :func:`validate`, so an ill-formed but parseable model can still be
inspected.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Iterable, Mapping

import jsonschema
import numpy as np

EXP = "exp"
ONDEMAND = "ondemand"
ERLANG = "erlang"
DET = "det"
LEAF_KINDS = (EXP, ONDEMAND, ERLANG, DET)

AND = "and"
OR = "or"
PAND = "pand"
GATE_KINDS = (AND, OR, PAND)

_ID_RE = re.compile(r"^[A-Za-z0-9_.:\-]+$")

# parameters each leaf kind may carry, besides id/kind/mu/initiator
_KIND_PARAMS = {
    EXP: {"required": {"lambda_active"}, "optional": {"lambda_standby"}},
    ONDEMAND: {"required": {"gamma"}, "optional": set()},
    ERLANG: {"required": {"erlang_phases", "erlang_rate"}, "optional": {"lambda_active"}},
    DET: {"required": {"duration"}, "optional": {"lambda_active"}},
}

_NUMBER = {"type": "number"}
MODEL_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["leaves", "gates", "top"],
    "properties": {
        "leaves": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "kind"],
                "properties": {
                    "id": {"type": "string"},
                    "kind": {"enum": list(LEAF_KINDS)},
                    "lambda_active": _NUMBER,
                    "lambda_standby": _NUMBER,
                    "gamma": _NUMBER,
                    "erlang_phases": {"type": "integer"},
                    "erlang_rate": _NUMBER,
                    "duration": _NUMBER,
                    "mu": _NUMBER,
                    "initiator": {"type": "boolean"},
                },
            },
        },
        "gates": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "kind", "children"],
                "properties": {
                    "id": {"type": "string"},
                    "kind": {"enum": list(GATE_KINDS)},
                    "children": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "triggers": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["origin", "target"],
                "properties": {"origin": {"type": "string"}, "target": {"type": "string"}},
            },
        },
        "top": {"type": "string"},
        "repair_groups": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "string"}},
        },
    },
}


class ModelError(ValueError):
    """Base class for every model-level failure."""


class ModelSyntaxError(ModelError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class DuplicateIdError(ModelError):
    pass


class UnknownReferenceError(ModelError):
    def __init__(self, name: str, context: str):
        self.name = name
        super().__init__(f"unknown reference {name!r} in {context}")


class ParameterError(ModelError):
    pass


class InvalidModelError(ModelError):
    """Raised by engines when :func:`validate` reports diagnostics."""

    def __init__(self, diagnostics: list["Diagnostic"]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class Leaf:
    id: str
    kind: str
    lambda_active: float = 0.0
    lambda_standby: float = 0.0
    gamma: float | None = None
    erlang_phases: int | None = None
    erlang_rate: float | None = None
    duration: float | None = None
    mu: float = 0.0
    initiator: bool = False
    repair_group: str | None = None

    @property
    def repairable(self) -> bool:
        return self.mu > 0.0


@dataclass(frozen=True)
class Gate:
    id: str
    kind: str
    children: tuple[str, ...]


@dataclass(frozen=True)
class Trigger:
    origin: str
    target: str


@dataclass(frozen=True)
class Diagnostic:
    node: str
    rule: str
    message: str = ""

    def __str__(self) -> str:
        return f"{self.node}: {self.rule}" + (f" ({self.message})" if self.message else "")


@dataclass(frozen=True, eq=True)
class Bdmp:
    leaves: tuple[Leaf, ...]
    gates: tuple[Gate, ...]
    triggers: tuple[Trigger, ...]
    top: str
    repair_groups: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __hash__(self) -> int:
        return hash(self.digest)

    @cached_property
    def leaf_map(self) -> dict[str, Leaf]:
        return {leaf.id: leaf for leaf in self.leaves}

    @cached_property
    def gate_map(self) -> dict[str, Gate]:
        return {gate.id: gate for gate in self.gates}

    def is_leaf(self, node: str) -> bool:
        return node in self.leaf_map

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(dump_model(self).encode("utf-8")).hexdigest()

    @cached_property
    def compiled(self) -> "CompiledModel":
        check_model(self)
        return CompiledModel(self)


# ---------------------------------------------------------------------------
# parsing / printing


def parse_model(text: str) -> Bdmp:
    """Parse a model document; defaults are applied to every leaf."""
    if not text.strip():
        raise ModelSyntaxError("empty model document", 1, 1)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ModelSyntaxError(f"{path}: {exc.message}") from None
    return model_from_dict(doc)


def load_model(path) -> Bdmp:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def _leaf_from_dict(entry: dict) -> Leaf:
    kind = entry["kind"]
    given = set(entry) - {"id", "kind", "mu", "initiator"}
    spec = _KIND_PARAMS[kind]
    missing = spec["required"] - given
    extra = given - spec["required"] - spec["optional"]
    if missing:
        raise ParameterError(f"leaf {entry['id']!r} of kind {kind!r} lacks {sorted(missing)}")
    if extra:
        raise ParameterError(f"leaf {entry['id']!r} of kind {kind!r} does not accept {sorted(extra)}")
    return Leaf(
        id=entry["id"],
        kind=kind,
        lambda_active=float(entry.get("lambda_active", 0.0)),
        lambda_standby=float(entry.get("lambda_standby", 0.0)),
        gamma=float(entry["gamma"]) if "gamma" in entry else None,
        erlang_phases=int(entry["erlang_phases"]) if "erlang_phases" in entry else None,
        erlang_rate=float(entry["erlang_rate"]) if "erlang_rate" in entry else None,
        duration=float(entry["duration"]) if "duration" in entry else None,
        mu=float(entry.get("mu", 0.0)),
        initiator=bool(entry.get("initiator", False)),
    )


def model_from_dict(doc: dict) -> Bdmp:
    seen: set[str] = set()
    for entry in list(doc["leaves"]) + list(doc["gates"]):
        if entry["id"] in seen:
            raise DuplicateIdError(f"duplicate id {entry['id']!r}")
        seen.add(entry["id"])

    groups = {name: tuple(members) for name, members in doc.get("repair_groups", {}).items()}
    group_of: dict[str, str] = {}
    for name, members in groups.items():
        for member in members:
            if member not in seen:
                raise UnknownReferenceError(member, f"repair group {name!r}")
            group_of.setdefault(member, name)

    leaves = []
    for entry in doc["leaves"]:
        leaf = _leaf_from_dict(entry)
        if leaf.id in group_of:
            leaf = replace(leaf, repair_group=group_of[leaf.id])
        leaves.append(leaf)
    gates = []
    for entry in doc["gates"]:
        for child in entry["children"]:
            if child not in seen:
                raise UnknownReferenceError(child, f"gate {entry['id']!r}")
        gates.append(Gate(entry["id"], entry["kind"], tuple(entry["children"])))
    triggers = []
    for entry in doc.get("triggers", []):
        for end in ("origin", "target"):
            if entry[end] not in seen:
                raise UnknownReferenceError(entry[end], f"trigger {end}")
        triggers.append(Trigger(entry["origin"], entry["target"]))
    if doc["top"] not in seen:
        raise UnknownReferenceError(doc["top"], "top")
    return Bdmp(tuple(leaves), tuple(gates), tuple(triggers), doc["top"], groups)


def _leaf_to_dict(leaf: Leaf) -> dict:
    out: dict[str, Any] = {"id": leaf.id, "kind": leaf.kind}
    if leaf.kind == EXP:
        out["lambda_active"] = leaf.lambda_active
        out["lambda_standby"] = leaf.lambda_standby
    elif leaf.kind == ONDEMAND:
        out["gamma"] = leaf.gamma
    elif leaf.kind == ERLANG:
        out["erlang_phases"] = leaf.erlang_phases
        out["erlang_rate"] = leaf.erlang_rate
        out["lambda_active"] = leaf.lambda_active
    elif leaf.kind == DET:
        out["duration"] = leaf.duration
        out["lambda_active"] = leaf.lambda_active
    out["mu"] = leaf.mu
    out["initiator"] = leaf.initiator
    return out


def model_to_dict(model: Bdmp) -> dict:
    return {
        "leaves": [_leaf_to_dict(leaf) for leaf in model.leaves],
        "gates": [{"id": g.id, "kind": g.kind, "children": list(g.children)} for g in model.gates],
        "triggers": [{"origin": t.origin, "target": t.target} for t in model.triggers],
        "top": model.top,
        "repair_groups": {name: list(members) for name, members in model.repair_groups.items()},
    }


def dump_model(model: Bdmp) -> str:
    """Canonical document: ``parse_model(dump_model(m)) == m``."""
    return json.dumps(model_to_dict(model), indent=2) + "\n"


# ---------------------------------------------------------------------------
# validation


def _bad_rate(x: float | None) -> bool:
    return x is None or not math.isfinite(x) or x < 0.0


def validate(model: Bdmp) -> list[Diagnostic]:
    """Every broken model invariant, in a deterministic order. Empty iff valid."""
    diags: list[Diagnostic] = []
    ids: dict[str, int] = {}
    for node in [leaf.id for leaf in model.leaves] + [gate.id for gate in model.gates]:
        ids[node] = ids.get(node, 0) + 1
        if not node or not _ID_RE.match(node):
            diags.append(Diagnostic(node, "invalid id", "ids are non-empty tokens without whitespace"))
    for node, count in ids.items():
        if count > 1:
            diags.append(Diagnostic(node, "duplicate id"))

    for leaf in model.leaves:
        if leaf.kind not in LEAF_KINDS:
            diags.append(Diagnostic(leaf.id, "unknown leaf kind", leaf.kind))
            continue
        if leaf.kind in (EXP, ERLANG, DET) and _bad_rate(leaf.lambda_active):
            diags.append(Diagnostic(leaf.id, "invalid rate", "lambda_active"))
        if _bad_rate(leaf.lambda_standby):
            diags.append(Diagnostic(leaf.id, "invalid rate", "lambda_standby"))
        if _bad_rate(leaf.mu):
            diags.append(Diagnostic(leaf.id, "invalid rate", "mu"))
        if leaf.kind == ONDEMAND:
            if leaf.gamma is None or not math.isfinite(leaf.gamma):
                diags.append(Diagnostic(leaf.id, "kind parameter mismatch", "gamma required"))
            elif not 0.0 <= leaf.gamma <= 1.0:
                diags.append(Diagnostic(leaf.id, "probability out of range", f"gamma={leaf.gamma}"))
        elif leaf.gamma is not None:
            diags.append(Diagnostic(leaf.id, "kind parameter mismatch", "gamma only for ondemand"))
        if leaf.kind == ERLANG:
            if leaf.erlang_phases is None or leaf.erlang_phases < 1:
                diags.append(Diagnostic(leaf.id, "kind parameter mismatch", "erlang_phases >= 1 required"))
            if _bad_rate(leaf.erlang_rate) or not leaf.erlang_rate:
                diags.append(Diagnostic(leaf.id, "invalid rate", "erlang_rate > 0 required"))
        elif leaf.erlang_phases is not None or leaf.erlang_rate is not None:
            diags.append(Diagnostic(leaf.id, "kind parameter mismatch", "erlang parameters only for erlang"))
        if leaf.kind == DET:
            if _bad_rate(leaf.duration) or not leaf.duration:
                diags.append(Diagnostic(leaf.id, "invalid rate", "duration > 0 required"))
        elif leaf.duration is not None:
            diags.append(Diagnostic(leaf.id, "kind parameter mismatch", "duration only for det"))
        if leaf.kind != EXP and leaf.lambda_standby:
            diags.append(Diagnostic(leaf.id, "kind parameter mismatch", "lambda_standby only for exp"))

    for gate in model.gates:
        if gate.kind not in GATE_KINDS:
            diags.append(Diagnostic(gate.id, "unknown gate kind", gate.kind))
        if not gate.children:
            diags.append(Diagnostic(gate.id, "gate without children"))
        if gate.kind == PAND and len(gate.children) < 2:
            diags.append(Diagnostic(gate.id, "pand needs two children"))
        if len(set(gate.children)) != len(gate.children):
            diags.append(Diagnostic(gate.id, "repeated child"))
        for child in gate.children:
            if child not in ids:
                diags.append(Diagnostic(gate.id, "unknown reference", child))

    if model.top not in ids:
        diags.append(Diagnostic(model.top, "unknown reference", "top"))

    seen_triggers: set[tuple[str, str]] = set()
    for trig in model.triggers:
        for end in (trig.origin, trig.target):
            if end not in ids:
                diags.append(Diagnostic(end, "unknown reference", "trigger"))
        if trig.origin == trig.target:
            diags.append(Diagnostic(trig.origin, "self trigger"))
        if (trig.origin, trig.target) in seen_triggers:
            diags.append(Diagnostic(trig.origin, "duplicate trigger", trig.target))
        seen_triggers.add((trig.origin, trig.target))

    cycle = _find_cycle(model)
    if cycle:
        diags.append(Diagnostic(cycle[0], "gate graph cyclic", " -> ".join(cycle)))

    reachable = _reachable(model)
    for node in ids:
        if node not in reachable:
            diags.append(Diagnostic(node, "unreachable node"))

    member_count: dict[str, int] = {}
    for name, members in model.repair_groups.items():
        for member in members:
            member_count[member] = member_count.get(member, 0) + 1
            leaf = model.leaf_map.get(member)
            if leaf is None:
                diags.append(Diagnostic(member, "unknown reference", f"repair group {name}"))
            elif not leaf.repairable:
                diags.append(Diagnostic(member, "non-repairable group member", name))
            elif leaf.repair_group != name and member_count[member] == 1:
                diags.append(Diagnostic(member, "repair group mismatch", name))
    for member, count in member_count.items():
        if count > 1:
            diags.append(Diagnostic(member, "leaf in several repair groups"))
    return diags


def _find_cycle(model: Bdmp) -> list[str] | None:
    gates = {g.id: g for g in model.gates}
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(node: str) -> list[str] | None:
        state[node] = 1
        stack.append(node)
        for child in gates[node].children:
            if child not in gates:
                continue
            if state.get(child) == 1:
                return stack[stack.index(child):] + [child]
            if child not in state:
                found = visit(child)
                if found:
                    return found
        stack.pop()
        state[node] = 2
        return None

    for gate in model.gates:
        if gate.id not in state:
            found = visit(gate.id)
            if found:
                return found
    return None


def _reachable(model: Bdmp) -> set[str]:
    gates = {g.id: g for g in model.gates}
    todo = [model.top] + [t.origin for t in model.triggers] + [t.target for t in model.triggers]
    seen: set[str] = set()
    while todo:
        node = todo.pop()
        if node in seen:
            continue
        seen.add(node)
        if node in gates:
            todo.extend(gates[node].children)
    return seen


def check_model(model: Bdmp) -> None:
    diags = validate(model)
    if diags:
        raise InvalidModelError(diags)


# ---------------------------------------------------------------------------
# array form used by the state-space builder and the simulator

KIND_CODE = {EXP: 0, ONDEMAND: 1, ERLANG: 2, DET: 3}
GATE_CODE = {AND: 0, OR: 1, PAND: 2}


def _csr(rows: Iterable[Iterable[int]]) -> tuple[np.ndarray, np.ndarray]:
    rows = [list(r) for r in rows]
    ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(r) for r in rows])
    idx = np.array([x for r in rows for x in r], dtype=np.int64)
    return ptr, idx


class CompiledModel:
    """Integer-indexed view of a valid model.

    Leaves are nodes ``0..L-1`` and gates ``L..L+G-1``.
    """

    def __init__(self, model: Bdmp):
        self.model = model
        self.leaf_ids = [leaf.id for leaf in model.leaves]
        self.gate_ids = [gate.id for gate in model.gates]
        self.node_ids = self.leaf_ids + self.gate_ids
        self.index = {node: i for i, node in enumerate(self.node_ids)}
        L = self.n_leaves = len(self.leaf_ids)
        G = self.n_gates = len(self.gate_ids)
        self.n_nodes = L + G
        self.top = self.index[model.top]

        leaves = model.leaves
        self.leaf_kind = np.array([KIND_CODE[leaf.kind] for leaf in leaves], dtype=np.int64)
        self.lam_a = np.array([leaf.lambda_active for leaf in leaves], dtype=np.float64)
        self.lam_s = np.array([leaf.lambda_standby for leaf in leaves], dtype=np.float64)
        self.gamma = np.array([leaf.gamma or 0.0 for leaf in leaves], dtype=np.float64)
        self.erl_k = np.array([leaf.erlang_phases or 0 for leaf in leaves], dtype=np.int64)
        self.erl_rate = np.array([leaf.erlang_rate or 0.0 for leaf in leaves], dtype=np.float64)
        self.duration = np.array([leaf.duration or 0.0 for leaf in leaves], dtype=np.float64)
        self.mu = np.array([leaf.mu for leaf in leaves], dtype=np.float64)

        self.gate_kind = np.array([GATE_CODE[g.kind] for g in model.gates], dtype=np.int64)
        self.child_ptr, self.child_idx = _csr([self.index[c] for c in g.children] for g in model.gates)
        parents: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for gi, gate in enumerate(model.gates):
            for child in gate.children:
                parents[self.index[child]].append(L + gi)
        self.par_ptr, self.par_idx = _csr(parents)
        origins: list[list[int]] = [[] for _ in range(self.n_nodes)]
        self.is_origin = np.zeros(self.n_nodes, dtype=np.bool_)
        for trig in model.triggers:
            origins[self.index[trig.target]].append(self.index[trig.origin])
            self.is_origin[self.index[trig.origin]] = True
        self.trig_ptr, self.trig_org = _csr(origins)

        # bottom-up gate order (children before parents), as gate positions
        order: list[int] = []
        done = np.zeros(G, dtype=np.bool_)

        def visit(gi: int) -> None:
            done[gi] = True
            for c in self.child_idx[self.child_ptr[gi]:self.child_ptr[gi + 1]]:
                if c >= L and not done[c - L]:
                    visit(int(c - L))
            order.append(gi)

        for gi in range(G):
            if not done[gi]:
                visit(gi)
        self.gate_order = np.array(order, dtype=np.int64)
        # top-down order over all nodes: gates reversed, then leaves
        self.act_order = np.array([L + g for g in reversed(order)] + list(range(L)), dtype=np.int64)

        self.pand_slot = np.full(G, -1, dtype=np.int64)
        pands = [gi for gi in range(G) if self.gate_kind[gi] == GATE_CODE[PAND]]
        for slot, gi in enumerate(pands):
            self.pand_slot[gi] = slot
        self.n_pand = len(pands)
        self.pand_gates = pands

        self.group_names = list(model.repair_groups)
        self.group_of = np.full(L, -1, dtype=np.int64)
        for gi, name in enumerate(self.group_names):
            for member in model.repair_groups[name]:
                self.group_of[self.index[member]] = gi
        self.n_groups = len(self.group_names)
        self.group_size = np.array(
            [len(model.repair_groups[name]) for name in self.group_names], dtype=np.int64
        )
