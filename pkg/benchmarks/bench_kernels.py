"""Time the hot kernels with numba and with the pure numpy/Python fallback.

    python benchmarks/bench_kernels.py            # both backends, side by side
    python benchmarks/bench_kernels.py --json

Each backend runs in its own interpreter because ``BDMPQ_DISABLE_NUMBA`` is
read once at import.  Every workload is called once untimed first so JIT
compilation stays out of the numbers; Monte Carlo is reported per trial
since the fallback runs far fewer trials.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _best(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def measure(mc_trials: int) -> dict:
    from bdmpq import CutoffCriteria, SimConfig, build_ctmc, explore_ns, simulate, transient
    from bdmpq._accel import backend_name
    from bdmpq.library import golden_model, standby_chain

    wide = build_ctmc(standby_chain(10, lam=1e-3, mu=0.05, ordered=False))
    golden = build_ctmc(golden_model())
    model = golden_model()
    results = {
        "backend": backend_name(),
        "uniformization (1024 states, t=1e4)": _best(lambda: transient(wide, 1e4), 3),
        "sequence tree (golden, t=5e3, 1e-10)": _best(
            lambda: explore_ns(golden, 5e3, CutoffCriteria(min_prob=1e-10)), 2),
    }
    cfg = SimConfig(mc_trials, 1e4, seed=1, workers=1, record=False)
    results["monte carlo per trial (golden, t=1e4)"] = _best(lambda: simulate(model, cfg), 2) / mc_trials
    return results


def _child(disable: bool, mc_trials: int) -> dict:
    env = dict(os.environ)
    env.pop("BDMPQ_DISABLE_NUMBA", None)
    if disable:
        env["BDMPQ_DISABLE_NUMBA"] = "1"
    cmd = [sys.executable, __file__, "--child", "--mc-trials", str(mc_trials)]
    out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
    return json.loads(out)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--json", action="store_true")
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    parser.add_argument("--mc-trials", type=int, default=200_000)
    parser.add_argument("--fallback-mc-trials", type=int, default=5_000)
    args = parser.parse_args()
    if args.child:
        print(json.dumps(measure(args.mc_trials)))
        return

    fast = _child(False, args.mc_trials)
    slow = _child(True, args.fallback_mc_trials)
    if args.json:
        print(json.dumps({"numba": fast, "fallback": slow}, indent=2))
        return
    names = [k for k in fast if k != "backend"]
    width = max(map(len, names))
    print(f"{'kernel'.ljust(width)}  {'numba [s]':>11}  {'fallback [s]':>12}  {'speedup':>8}")
    for name in names:
        print(f"{name.ljust(width)}  {fast[name]:11.3e}  {slow[name]:12.3e}  {slow[name] / fast[name]:7.1f}x")


if __name__ == "__main__":
    main()
