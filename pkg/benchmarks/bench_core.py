"""Compare the compiled and numpy implementations of the batched local solve.

Usage::

    python3 benchmarks/bench_core.py [--queries 2000] [--support 60] [--repeat 5]

Prints median wall time per backend for a grid of dimensions and degrees,
plus an end-to-end ``FittedModel.predict`` timing with each backend forced.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from gclpr import _backend, _pycore
from gclpr.basis import MultiIndexSet
from gclpr.estimator import Dataset, Hyperparameters, fit


def batch(rng, q, m, d, p):
    mi = MultiIndexSet.build(p, d)
    offsets = np.arange(q + 1, dtype=np.int64) * m
    disp = rng.standard_normal((q * m, d))
    w = rng.uniform(0.05, 1.0, q * m)
    y = rng.standard_normal(q * m)
    return disp, w, y, offsets, np.ascontiguousarray(mi.exponents), mi.prefix_sizes()


def timeit(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--support", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    cores = _backend.available()
    if "cython" not in cores:
        print("compiled core not built; only the python backend is available")
    rng = np.random.default_rng(0)
    print(f"{'d':>2} {'p':>2} " + " ".join(f"{name:>12}" for name in cores) + "   speedup")
    for d in (1, 2, 3):
        for p in (0, 1, 2):
            args_ = batch(rng, args.queries, args.support, d, p)
            res = {name: timeit(lambda f=f: f(*args_, 1e-8), args.repeat) for name, f in cores.items()}
            line = f"{d:>2} {p:>2} " + " ".join(f"{res[n] * 1e3:10.2f}ms" for n in cores)
            if "cython" in res:
                line += f"   {res['python'] / res['cython']:6.1f}x"
            print(line)

    # end to end: adaptive LPR prediction with each backend
    Z = rng.uniform(0, 1, (5000, 2))
    data = Dataset(Z, np.sin(4 * Z[:, 0]) + Z[:, 1] ** 2)
    Q = Dataset(rng.uniform(0, 1, (args.queries, 2)))
    model = fit(data, Hyperparameters(k=40, degree=2))
    saved = _backend.local_fit_batch
    try:
        for name, f in cores.items():
            _backend.local_fit_batch = f
            print(f"predict ({name}): {timeit(lambda: model.predict(Q), args.repeat) * 1e3:.1f}ms")
    finally:
        _backend.local_fit_batch = saved


if __name__ == "__main__":
    main()
