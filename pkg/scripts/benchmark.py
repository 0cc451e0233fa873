#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback on
production-shaped inputs (sizes from the V = 21 fixture)."""

import time

import numpy as np

from normcount.kernels import both_backends

rng = np.random.default_rng(1)


def bench(name, fn, reps=3):
    best = min(_timed(fn) for _ in range(reps))
    print(f"  {name:<18} {best * 1e3:10.1f} ms")
    return best


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main():
    backends = both_backends()
    if len(backends) == 1:
        print("only the python backend is available")

    # pair correlation: 2e6 image points x 60 coefficient rows
    n = 2_000_000
    x1 = rng.integers(0, 90000, n)
    x2 = rng.integers(-40000, 40000, n)
    wt = rng.integers(1, 3, n)
    lam = rng.integers(0, 3, 40_000_000).astype(np.int32)
    rows = [(int(a), int(b)) for a, b in rng.integers(200, 800, (60, 2))]

    # line sums: 3e4 targets x ~100 points per line, targets drawn from
    # actual values of the linear form on the table box so lines cross it
    from normcount.counting import _bezout
    a1p, a2p = 473, 411
    ab1, ab2 = _bezout(a1p, a2p)
    px = rng.integers(0, 760 * 128, 30000)
    py = rng.integers(-190 * 128, 190 * 128, 30000)
    bp = a1p * px + a2p * py
    bcnt = rng.integers(1, 4, 30000)
    table = rng.random((760, 380))
    ktab = np.array([[4.0, 0.0], [0.0, 0.0]])

    # projection: 1e4 directions x 2e5 samples
    a1 = rng.uniform(400, 1500, 10000)
    a2 = rng.uniform(-600, 600, 10000)
    vw = np.ones(10000)
    s1 = rng.uniform(0, 90000, 200_000)
    s2 = rng.uniform(-40000, 40000, 200_000)
    wb = rng.random(4096)

    for name, mod in backends:
        print(f"backend: {name}")
        bench("pair_correlate", lambda: [
            mod.pair_correlate(x1, x2, wt, a, b, lam, 0) for a, b in rows])
        bench("line_sum", lambda: mod.line_sum(
            bp, bcnt, ab1, ab2, a2p, -a1p, 0, 760 * 128 - 1, -190 * 128,
            190 * 128 - 1, table, 0, -190 * 128, 128, ktab, 2))
        bench("proj_bin_many", lambda: mod.proj_bin_many(
            a1, a2, vw, s1, s2, wb, 4e6, 25000.0))
        print()


if __name__ == "__main__":
    main()
