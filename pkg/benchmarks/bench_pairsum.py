"""Pair-sum semi-norms and solver kernels: numba backend versus the numpy fallback.

Usage::

    python benchmarks/bench_pairsum.py [--N 64 128] [--repeat 3]

The first numba call includes JIT compilation and is reported separately.
"""

import argparse
import time

import numpy as np

from frackorn import _accel
from frackorn import nonlocal_system as ns
from frackorn import seminorms as sn
from frackorn.fields import FracParams, compact_family, make_grid


def backends():
    names = ["numpy"]
    try:
        _accel.get_backend("numba")
        names.insert(0, "numba")
    except ImportError:
        pass
    return names


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_seminorm(N, p, repeat):
    g = make_grid(2, 10.0, N)
    f = compact_family("mixed", g, 1, seed=0)[0]
    prm = FracParams(0.5, p, 2)
    rows = []
    for name in backends():
        t0 = time.perf_counter()
        sn.pair_seminorms(f, prm, backend=name)
        first = time.perf_counter() - t0
        t, res = best_of(lambda: sn.pair_seminorms(f, prm, backend=name), repeat)
        rows.append((name, first, t, res["gagliardo"].extrapolated))
    return rows


def bench_gradient(N, p, repeat):
    prm = FracParams(0.5, p, 2)
    pb = ns.build_ball_problem(prm, L=5.0, N=N, radius=1.0)
    u = np.random.default_rng(0).standard_normal((pb.n, 2)) * 1e-2
    u[pb.collar_mask] = 0
    rows = []
    for name in backends():
        t0 = time.perf_counter()
        ns.energy_gradient(u, pb, backend=name)
        first = time.perf_counter() - t0
        t, (_, g) = best_of(lambda: ns.energy_gradient(u, pb, backend=name), repeat)
        rows.append((name, first, t, float(np.linalg.norm(g))))
    return pb.n, rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, nargs="+", default=[64, 128])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    print(f"{'kernel':<22}{'N':>6}{'p':>5}{'backend':>9}{'first[s]':>11}{'best[s]':>11}{'value':>24}")
    for N in args.N:
        for p in (2.0, 3.0):
            rows = bench_seminorm(N, p, args.repeat)
            for name, first, t, val in rows:
                print(f"{'pair_seminorms':<22}{N:>6}{p:>5g}{name:>9}{first:>11.3f}{t:>11.3f}{val:>24.16e}")
            if len(rows) == 2:
                print(f"{'':<22}{'':>6}{'':>5}{'speedup':>9}{'':>11}{rows[1][2] / rows[0][2]:>11.1f}x")
    for N in args.N:
        n, rows = bench_gradient(N, 2.0, args.repeat)
        for name, first, t, val in rows:
            print(f"{'energy_gradient':<22}{n:>6}{2:>5}{name:>9}{first:>11.3f}{t:>11.3f}{val:>24.16e}")
        if len(rows) == 2:
            print(f"{'':<22}{'':>6}{'':>5}{'speedup':>9}{'':>11}{rows[1][2] / rows[0][2]:>11.1f}x")


if __name__ == "__main__":
    main()
