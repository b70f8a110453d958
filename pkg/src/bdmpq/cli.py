"""``bdmpq`` command line.

Exit codes: 0 success, 2 model error, 3 numeric failure, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import analysis
from .ctmc import export_ctmc
from .model import ModelError, load_model, validate
from .report import AnalysisReport, dumps, render_table
from .solve import SolverError
from .statespace import StateSpaceOverflow, build_ctmc

EXIT_OK, EXIT_MODEL, EXIT_NUMERIC, EXIT_USAGE = 0, 2, 3, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _times(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad mission time list {text!r}") from None
    if not values or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("mission times must be >= 0")
    return values


def _engines(text: str) -> tuple[str, ...]:
    names = tuple(x.strip() for x in text.split(",") if x.strip())
    unknown = [n for n in names if n not in analysis.RUNNERS]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"unknown engines {unknown}; choose from {sorted(analysis.RUNNERS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", required=True, help="model document (JSON)")

    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--format", choices=("table", "json"), default="table")

    times = argparse.ArgumentParser(add_help=False)
    times.add_argument("--t", type=_times, default=(1e4,), help="mission time(s) in hours, comma separated")

    space = argparse.ArgumentParser(add_help=False)
    space.add_argument("--filtering", action="store_true", help="drop failures of irrelevant leaves")
    space.add_argument("--max-states", type=int, default=2_000_000)

    tol = argparse.ArgumentParser(add_help=False)
    tol.add_argument("--tol", type=float, default=analysis.DEFAULT_TOL, help="Poisson truncation error")

    cut = argparse.ArgumentParser(add_help=False)
    cut.add_argument("--cutoff", type=float, default=0.0, help="probability cutoff")

    seqcut = argparse.ArgumentParser(add_help=False)
    seqcut.add_argument("--max-len", type=int, default=0)
    seqcut.add_argument("--max-failures", type=int, default=0)
    seqcut.add_argument("--max-repairs", type=int, default=0)
    seqcut.add_argument("--budget", type=int, default=2_000_000, help="max sequence-tree expansions")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--trials", type=int, default=100_000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--ci-level", type=float, default=0.90)
    sim.add_argument("--battery", choices=("optimistic", "pessimistic"), default="optimistic")
    sim.add_argument("--workers", type=int, default=None, help="threads (default: BDMPQ_THREADS or CPU count)")

    parser = _Parser(prog="bdmpq", description="Reliability analysis of BDMP models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("validate", parents=[model, out], help="check a model and list diagnostics")
    p = sub.add_parser("build-ctmc", parents=[model, space], help="export the explicit CTMC")
    p.add_argument("--output", "-o", help="write to a file instead of stdout")
    sub.add_parser("transient", parents=[model, out, times, space, tol], help="uniformization")
    sub.add_parser("nri", parents=[model, out, times, space, cut, seqcut], help="no-return-to-initial bound")
    sub.add_parser("ns", parents=[model, out, times, space, cut, seqcut], help="sequence tree bounds")
    sub.add_parser("simulate", parents=[model, out, times, sim], help="Monte Carlo")
    sub.add_parser("mcs", parents=[model, out, times], help="minimal cut sets with static bounds")
    sub.add_parser("iab", parents=[model, out, times, cut], help="initiator and all barriers")
    sub.add_parser("bdd-prob", parents=[model, out, times], help="exact static probability by BDD")
    p = sub.add_parser("compare", parents=[model, out, times, space, tol, cut, seqcut, sim],
                       help="run several engines and tabulate")
    p.add_argument("--engines", type=_engines, default=tuple(analysis.RUNNERS))
    return parser


def _settings(args) -> analysis.Settings:
    get = lambda name, default=None: getattr(args, name, default)  # noqa: E731
    return analysis.Settings(
        times=get("t", (1e4,)),
        cutoff=get("cutoff", 0.0),
        max_len=get("max_len", 0),
        max_failures=get("max_failures", 0),
        max_repairs=get("max_repairs", 0),
        tol=get("tol", analysis.DEFAULT_TOL),
        filtering=get("filtering", False),
        seed=get("seed", 0),
        trials=get("trials", 100_000),
        ci_level=get("ci_level", 0.90),
        battery_policy=get("battery", "optimistic"),
        workers=get("workers"),
        ns_budget=get("budget", 2_000_000),
        max_states=get("max_states", 2_000_000),
    )


def _emit(reports: list[AnalysisReport], fmt: str) -> None:
    print(dumps(reports) if fmt == "json" else render_table(reports))


def _validate(args) -> int:
    try:
        model = load_model(args.model)
    except ModelError as exc:
        diags = [{"node": None, "rule": type(exc).__name__, "message": str(exc)}]
    else:
        diags = [{"node": d.node, "rule": d.rule, "message": d.message} for d in validate(model)]
    if args.format == "json":
        print(json.dumps({"valid": not diags, "diagnostics": diags}, indent=2))
    elif diags:
        for d in diags:
            print(f"{d['node'] or '-'}: {d['rule']}: {d['message']}")
    else:
        print("model is valid")
    return EXIT_MODEL if diags else EXIT_OK


COMMAND_ENGINES = {
    "transient": ("transient",),
    "nri": ("nri",),
    "ns": ("ns",),
    "simulate": ("mc",),
    "mcs": ("mcs-bdd",),
    "iab": ("iab",),
    "bdd-prob": ("mcs-bdd",),
}


def _dispatch(args) -> int:
    if args.command == "validate":
        return _validate(args)
    model = load_model(args.model)
    if args.command == "build-ctmc":
        text = export_ctmc(build_ctmc(model, filtering=args.filtering, max_states=args.max_states))
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    engines = args.engines if args.command == "compare" else COMMAND_ENGINES[args.command]
    settings = _settings(args)
    _emit([analysis.run(e, model, settings) for e in engines], args.format)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ModelError, OSError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (SolverError, StateSpaceOverflow, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
