"""Compare the compiled hot kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats R] [--csv PATH]
"""

import argparse
import csv
import sys
import timeit

import numpy as np

from regret_adjust import _ext
from regret_adjust._ext import fallback


def vertex_case(d, rng):
    L = rng.normal(size=(d, d))
    lo = rng.uniform(-1, 0, d)
    return (L @ L.T, rng.normal(size=d), 0.5, lo, lo + rng.uniform(0.1, 1, d))


def rows_case(m, d, rng):
    lo = rng.uniform(-1, 0, d)
    return (rng.normal(size=(m, d)), rng.normal(size=m), lo, lo + rng.uniform(0.1, 1, d))


def best_time(fn, args, repeats):
    number = max(1, int(0.05 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-7)))
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeats)) / number


def run(repeats):
    rng = np.random.default_rng(0)
    rows = []
    for d in (3, 7, 12, 16):
        args = vertex_case(d, rng)
        native = best_time(_ext.vertex_max, args, repeats)
        pure = best_time(fallback.vertex_max, args, repeats)
        rows.append(("vertex_max", f"d={d}", native, pure))
    for m, d in ((12, 3), (96, 12), (400, 30)):
        args = rows_case(m, d, rng)
        native = best_time(_ext.rows_box_max, args, repeats)
        pure = best_time(fallback.rows_box_max, args, repeats)
        rows.append(("rows_box_max", f"m={m},d={d}", native, pure))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--csv", help="also write the table as CSV")
    args = ap.parse_args(argv)
    if _ext.BACKEND != "cython":
        print("compiled extension not available; only the fallback would be measured", file=sys.stderr)
        return 1
    rows = run(args.repeats)
    print(f"{'kernel':<14}{'size':<12}{'cython [us]':>12}{'numpy [us]':>12}{'speedup':>9}")
    for name, size, native, pure in rows:
        print(f"{name:<14}{size:<12}{native * 1e6:>12.2f}{pure * 1e6:>12.2f}{pure / native:>9.1f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "size", "cython_s", "numpy_s", "speedup"])
            for name, size, native, pure in rows:
                w.writerow([name, size, f"{native:.6e}", f"{pure:.6e}", f"{pure / native:.3f}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
