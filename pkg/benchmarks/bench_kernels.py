#!/usr/bin/env python3
"""Benchmark the compiled scheduling kernels against the numpy fallback.

Times the three hot operations (exact multiplier solve, smoothed multiplier
solve, full objective evaluation) on a synthetic 24-slot x 3-location
logarithmic scenario, for every backend that can be imported.

Run:  python benchmarks/bench_kernels.py [--repeats 50]
"""

import argparse
import time

import numpy as np

from tlpricing import kernels
from tlpricing.indexing import scenario_index
from tlpricing.model import Logarithmic, Scenario, UserType, normalize_scenario
from tlpricing.objective import operator_cost
from tlpricing.spg import smoothed_cost


def synthetic_scenario(T0=24, L=3, T=12, seed=0):
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(0.2, 1.0, (T0, L))
    alpha /= alpha.sum(axis=1, keepdims=True)
    beta = np.zeros((T0, L, T0, L))
    for t in range(T0):
        t_end = min(t + T - 1, T0 - 1)
        for l in range(L):
            for t2 in range(t + 1, t_end + 1):
                row = rng.uniform(0.1, 1.0, L)
                beta[t, l, t2] = row / row.sum()
    x_ini = rng.uniform(0.5, 8.0, (T0, L))
    return normalize_scenario(
        Scenario(
            T0=T0, L=L, T=T, capacity=5.0, gamma=30.0, p0=1.0, alpha=alpha,
            user_types=[UserType(Logarithmic(1.0), 0.6, beta, x_ini)],
        )
    )


def time_call(fn, repeats):
    fn()  # warm up
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    s = synthetic_scenario()
    ti = scenario_index(s).types[0]
    rng = np.random.default_rng(1)
    p = rng.uniform(0.2, 1.0, (s.T0, s.L))
    p_cells = p.ravel()[ti.cell_flat]

    found = kernels.backends()
    print(f"scenario: {s.T0}x{s.L}, window cells total = {ti.n_cells}, "
          f"origins = {ti.n_origins}; active backend = {kernels.BACKEND}")
    header = f"{'operation':34s}" + "".join(f"{name:>14s}" for name in found)
    print(header)
    print("-" * len(header))

    rows = [
        (
            "exact multipliers (bisection)",
            lambda impl: impl.solve_log_lambda(
                ti.param, ti.x0, p_cells, ti.disc, ti.w, ti.ptr, 1e-6
            ),
        ),
        (
            "smoothed multipliers (mu=1e-4)",
            lambda impl: impl.solve_smoothed_lambda(
                ti.param, ti.x0, p_cells, ti.disc, ti.w, ti.ptr, 1e-4
            ),
        ),
    ]
    for label, maker in rows:
        cells = []
        for name, impl in found.items():
            dt = time_call(lambda: maker(impl), args.repeats)
            cells.append(f"{dt * 1e3:11.3f} ms")
        print(f"{label:34s}" + "".join(f"{c:>14s}" for c in cells))

    # Full-evaluation timings: temporarily point the selector at each backend.
    names = ("solve_log_lambda", "solve_smoothed_lambda", "log_amounts",
             "smoothed_amounts", "smoothed_slopes")
    saved = {n: getattr(kernels, n) for n in names}
    results = {}
    try:
        for name, impl in found.items():
            for n in names:
                setattr(kernels, n, getattr(impl, n))
            dt1 = time_call(lambda: operator_cost(s, p), args.repeats)
            dt2 = time_call(lambda: smoothed_cost(s, p, 1e-4), args.repeats)
            results[name] = (dt1, dt2)
    finally:
        for n, fn in saved.items():
            setattr(kernels, n, fn)
    for i, label in enumerate(("operator cost (full eval)", "smoothed cost (full eval)")):
        cells = [f"{results[name][i] * 1e3:11.3f} ms" for name in found]
        print(f"{label:34s}" + "".join(f"{c:>14s}" for c in cells))


if __name__ == "__main__":
    main()
