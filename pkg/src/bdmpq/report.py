"""Engine-neutral analysis report with JSON and table renderings."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

ENGINES = ("transient", "nri", "ns", "mc", "iab", "mcs-bdd")


@dataclass
class Estimate:
    t: float
    estimate: float
    lower: float | None = None
    upper: float | None = None
    ci_halfwidth: float | None = None

    def __post_init__(self):
        tol = 1e-12 * max(1.0, abs(self.estimate))
        if self.lower is not None and self.lower > self.estimate + tol:
            raise ValueError("lower bound above estimate")
        if self.upper is not None and self.upper < self.estimate - tol:
            raise ValueError("upper bound below estimate")

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"t": self.t, "estimate": self.estimate}
        for key in ("lower", "upper", "ci_halfwidth"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


@dataclass
class AnalysisReport:
    engine: str
    model_hash: str
    config: dict
    results: list[Estimate]
    items: list[dict] = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    cpu_time: float = 0.0

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")

    def to_dict(self) -> dict:
        return {
            "engine": self.engine,
            "model_hash": self.model_hash,
            "config": self.config,
            "results": [r.to_dict() for r in self.results],
            "items": self.items,
            "counters": self.counters,
            "notes": self.notes,
            "timing": {"wall_s": self.wall_time, "cpu_s": self.cpu_time},
        }


def dumps(reports: list[AnalysisReport]) -> str:
    payload: Any = reports[0].to_dict() if len(reports) == 1 else [r.to_dict() for r in reports]
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)


def _num(value: float | None) -> str:
    if value is None:
        return "-"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) and (math.isnan(value) or math.isinf(value)):
        return str(value)
    return f"{value:.4e}"


def _counters(counters: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in counters.items())


def render_table(reports: list[AnalysisReport], max_items: int = 10) -> str:
    header = ("engine", "t", "estimate", "lower", "upper", "ci_half", "items", "counters", "wall_s")
    rows = []
    for rep in reports:
        for res in rep.results:
            rows.append((
                rep.engine, f"{res.t:g}", _num(res.estimate), _num(res.lower), _num(res.upper),
                _num(res.ci_halfwidth), str(len(rep.items)), _counters(rep.counters), f"{rep.wall_time:.2f}",
            ))
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
    for rep in reports:
        if rep.items and max_items:
            lines.append("")
            lines.append(f"[{rep.engine}] top {min(max_items, len(rep.items))} of {len(rep.items)}")
            for item in rep.items[:max_items]:
                lines.append(f"  {item.get('rank', ''):>4}  {_num(item.get('value'))}  {item.get('text', '')}")
        for note in rep.notes:
            lines.append(f"[{rep.engine}] note: {note}")
    return "\n".join(lines)
