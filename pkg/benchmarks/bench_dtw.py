"""Compare the compiled and pure-Python DTW backends.

    python benchmarks/bench_dtw.py [--length 187] [--queries 10] [--supports 25] [--window W]

Both backends run the same pairs; the script checks they agree and prints
time per pair, time per DP cell and the speedup.
"""

import argparse
import sys
import time

import numpy as np

from fsts import dtw


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--length", type=int, default=187)
    ap.add_argument("--queries", type=int, default=10)
    ap.add_argument("--supports", type=int, default=25)
    ap.add_argument("--window", type=int, default=None)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if "cython" not in dtw.BACKENDS:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return 1

    rng = np.random.default_rng(args.seed)
    L = args.length
    q = rng.random((args.queries, L))
    s = rng.random((args.supports, L))
    ql = np.full(args.queries, L, dtype=np.int64)
    sl = np.full(args.supports, L, dtype=np.int64)
    pairs = args.queries * args.supports
    if args.window is None:
        cells = pairs * L * L
    else:
        w = min(args.window, L - 1)
        cells = pairs * (L * (2 * w + 1) - w * (w + 1))

    results = {}
    for name in ("cython", "python"):
        repeat = args.repeat if name == "cython" else 1
        t, out = best_of(lambda: dtw.dtw_matrix(q, ql, s, sl, args.window, backend=name), repeat)
        results[name] = (t, out)
        print(f"{name:>7}: {t:9.4f} s  {t / pairs * 1e3:9.3f} ms/pair  {t / cells * 1e9:8.2f} ns/cell")

    agree = np.allclose(results["cython"][1], results["python"][1], rtol=0, atol=1e-9)
    print(f"pairs={pairs} length={L} window={args.window} backends agree: {agree}")
    print(f"speedup: {results['python'][0] / results['cython'][0]:.1f}x")
    return 0 if agree else 1


if __name__ == "__main__":
    sys.exit(main())
