#!/usr/bin/env python3
"""Numba vs numpy timings for the hot kernels.

    python3 benchmarks/bench_kernels.py [--rows 1000000] [--runs 5] [--json out.json]

Each kernel is run once per backend to warm up (numba compiles then), then
timed over ``--runs`` repetitions; the best time is reported. Outputs of the
two backends are compared for equality as a sanity check.
"""

import argparse
import json
import sys
import time

import numpy as np

from driftbench._kernels import _numpy

try:
    from driftbench._kernels import _numba
except ImportError:
    _numba = None


def best_of(fn, args, runs):
    fn(*args)  # warmup
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, seed=0):
    gen = np.random.default_rng(seed)
    numeric = gen.normal(size=(n, 8))
    codes = gen.integers(0, 5, size=(n, 4))
    inv = 1.0 / numeric.std(axis=0)
    scores = np.sort(np.round(gen.random(n), 4))[::-1].copy()
    labels = (gen.random(n) < 0.05).astype(np.int64)
    return {
        "hash_uniform": (np.uint64(12345), np.arange(n, dtype=np.int64)),
        "anchor_distances": (numeric, codes, numeric[0], codes[0], inv),
        "true_positives_within_budget": (scores, labels, int(0.01 * (labels == 0).sum())),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--rows", type=int, default=1_000_000)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)

    if _numba is None:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1

    results = []
    print(f"{'kernel':<30} {'numpy s':>10} {'numba s':>10} {'speedup':>8}  equal")
    for name, kargs in cases(args.rows).items():
        t_np = best_of(getattr(_numpy, name), kargs, args.runs)
        t_nb = best_of(getattr(_numba, name), kargs, args.runs)
        same = bool(np.array_equal(getattr(_numpy, name)(*kargs), getattr(_numba, name)(*kargs)))
        results.append({"kernel": name, "rows": args.rows, "numpy_s": t_np, "numba_s": t_nb, "equal": same})
        print(f"{name:<30} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x  {same}")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0 if all(r["equal"] for r in results) else 2


if __name__ == "__main__":
    sys.exit(main())
