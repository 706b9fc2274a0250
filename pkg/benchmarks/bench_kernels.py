"""Time the numba and numpy variants of each hot kernel.

Sizes default to one draw of the 20-cohort Monte Carlo design. Run with
``python benchmarks/bench_kernels.py [--reps 199] [--end-to-end]``.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fundgap import kernels


def _inputs(units, clusters, events, strata, reps, seed=0):
    rng = np.random.default_rng(seed)
    cluster = np.sort(rng.integers(0, clusters, units)).astype(np.int64)
    D = rng.normal(size=(units, events))
    V = rng.random((units, events)) > 0.05
    D[~V] = np.nan
    X = np.ones((units, 1))
    w = np.ones(units)
    starts = np.linspace(0, clusters, strata, endpoint=False).astype(np.int64)
    M = rng.integers(0, 3, (reps, clusters)).astype(np.float64)
    F = rng.normal(size=(clusters, 3 * events + 1))
    # person-by-event-year rows, unbalanced by dropping 5%; time groups are cohort-specific
    per = events + 1
    g1 = np.repeat(np.arange(units), per).astype(np.int64)
    cohort = rng.integers(0, strata // 2, units)
    g2 = (np.repeat(cohort, per) * per + np.tile(np.arange(per), units)).astype(np.int64)
    keep = rng.random(len(g1)) > 0.05
    g1, g2 = g1[keep], g2[keep]
    _, g2 = np.unique(g2, return_inverse=True)
    Z = rng.normal(size=(len(g1), 4))
    return (cluster, D, V, X, w, clusters), (M, starts, F), (Z, g1, g2.astype(np.int64), units, int(g2.max()) + 1)


def _best(fn, number):
    return min(timeit.repeat(fn, number=number, repeat=5)) / number


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--units", type=int, default=4800)
    p.add_argument("--clusters", type=int, default=600)
    p.add_argument("--events", type=int, default=10)
    p.add_argument("--strata", type=int, default=40)
    p.add_argument("--reps", type=int, default=199)
    p.add_argument("--end-to-end", action="store_true", help="also time a bootstrap run under each backend")
    args = p.parse_args(argv)

    mom, strat, dem = _inputs(args.units, args.clusters, args.events, args.strata, args.reps)
    cases = {
        "cluster_moments": (lambda b: kernels.BACKENDS[b]["cluster_moments"](*mom), 20),
        "stratum_sums": (lambda b: kernels.BACKENDS[b]["stratum_sums"](*strat), 20),
        "demean_two_way": (lambda b: kernels.BACKENDS[b]["demean_two_way"](*dem), 5),
    }
    print(f"{'kernel':<18}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>10}")
    for name, (fn, number) in cases.items():
        fn("numba")  # compile
        t_np = _best(lambda: fn("numpy"), number)
        t_nb = _best(lambda: fn("numba"), number)
        print(f"{name:<18}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.1f}")

    if args.end_to_end:
        code = (
            "import time;from fundgap.synth import DgpConfig, simulate;from fundgap.did import estimate;"
            "s=simulate(DgpConfig(n_cohorts=20,labs_per_cohort=30,persons_per_lab=8),files=False).stacked();"
            f"estimate(s,bootstrap_reps=9);t=time.perf_counter();estimate(s,bootstrap_reps={args.reps});"
            "print(time.perf_counter()-t)"
        )
        for flag in ("0", "1"):
            env = dict(os.environ, FUNDGAP_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
            label = "numba" if flag == "1" else "numpy"
            print(f"estimate + {args.reps}-rep bootstrap ({label}): {float(out.stdout):.3f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
