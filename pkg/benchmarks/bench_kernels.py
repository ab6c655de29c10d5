"""Benchmark the jitted kernels against the pure-numpy fallback.

Run directly to benchmark the backend selected by THRESHOLD_MECH_BACKEND,
or with --both to launch one subprocess per backend and print a comparison
table.  Workloads mirror the hot paths: per-draw protocol evaluation, the
water-filling allocator, and a full sweep cell.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def bench_withdrawal_draws(reps: int) -> float:
    from threshold_mech import _kernels as K

    rng = np.random.default_rng(0)
    costs = rng.uniform(1.0, 5.0, (reps, 50))
    e = np.empty(50)
    # warm-up triggers compilation on the jitted path
    K._withdrawal_draw(costs[0], 10.5, 0.05, 3.0, 1.0, False, K.PROTO_M, e)
    t0 = time.perf_counter()
    for r in range(reps):
        for proto in (K.PROTO_S, K.PROTO_M, K.PROTO_L):
            K._withdrawal_draw(costs[r], 10.5, 0.05, 3.0, 1.0, False, proto, e)
    return time.perf_counter() - t0


def bench_water_fill(reps: int) -> float:
    from threshold_mech import _kernels as K

    rng = np.random.default_rng(1)
    k = 11
    costs = rng.uniform(1.0, 5.0, (reps, k))
    lower = 0.05 / costs
    upper = np.ones(k)
    out = np.empty(k)
    K._water_fill(costs[0], lower[0], upper, 10.0, out)
    t0 = time.perf_counter()
    for r in range(reps):
        K._water_fill(costs[r], lower[r], upper, 10.0, out)
    return time.perf_counter() - t0


def bench_sweep_cell(n_mc: int) -> float:
    from threshold_mech.engine import SweepConfig, run_cell

    cfg = SweepConfig(v_grid=(3.0,), p_grid=(0.2,), n_mc=n_mc, master_seed=7,
                      mechanisms=("C", "S", "M"), b0=0.15)
    run_cell(cfg, 0, 0)  # warm-up
    t0 = time.perf_counter()
    run_cell(cfg, 0, 0)
    return time.perf_counter() - t0


def run_current(reps: int, n_mc: int) -> dict:
    from threshold_mech import BACKEND

    return {
        "backend": BACKEND,
        "withdrawal_draws_s": bench_withdrawal_draws(reps),
        "water_fill_s": bench_water_fill(reps),
        "sweep_cell_s": bench_sweep_cell(n_mc),
        "reps": reps,
        "n_mc": n_mc,
    }


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=20_000)
    ap.add_argument("--n-mc", type=int, default=5_000)
    ap.add_argument("--both", action="store_true",
                    help="compare numba and numpy backends in subprocesses")
    ap.add_argument("--json", action="store_true", help="emit raw JSON")
    args = ap.parse_args()

    if not args.both:
        res = run_current(args.reps, args.n_mc)
        if args.json:
            print(json.dumps(res))
        else:
            print(f"backend={res['backend']}  "
                  f"draws({args.reps}x3)={res['withdrawal_draws_s']:.3f}s  "
                  f"water_fill({args.reps})={res['water_fill_s']:.3f}s  "
                  f"cell({args.n_mc})={res['sweep_cell_s']:.3f}s")
        return 0

    rows = []
    for backend in ("numba", "numpy"):
        env = dict(os.environ, THRESHOLD_MECH_BACKEND=backend)
        out = subprocess.run(
            [sys.executable, __file__, "--reps", str(args.reps),
             "--n-mc", str(args.n_mc), "--json"],
            env=env, capture_output=True, text=True, check=True,
        )
        rows.append(json.loads(out.stdout.strip().splitlines()[-1]))

    print(f"{'benchmark':<28}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for key, label in (("withdrawal_draws_s", f"3 protocols x {args.reps}"),
                       ("water_fill_s", f"water fill x {args.reps}"),
                       ("sweep_cell_s", f"sweep cell ({args.n_mc} draws)")):
        a, b = rows[0][key], rows[1][key]
        print(f"{label:<28}{a:>11.3f}s{b:>11.3f}s{b / a:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
