#!/usr/bin/env python3
"""Benchmark: compiled extension core vs pure-Python fallback.

Times the hot kernels on both backends and prints a comparison table.
Run from the repo root after building the extension in place:

    python setup.py build_ext --inplace
    python benchmarks/bench_backends.py
"""
import time

import numpy as np

from krasovskii_kit import _backend
from krasovskii_kit.histories import (DelaySignal, SinusoidDelay,
                                      make_triangle_history)
from krasovskii_kit.lmi import synthesize_certificate
from krasovskii_kit.solver import SystemModel, integrate


def timed(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_integrate():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(2, 2)) * 0.4
    b = rng.normal(size=(2, 2)) * 0.4
    model = SystemModel(a=a, pointwise=[(b, 0)])
    zeta = DelaySignal(1.0, [SinusoidDelay(0.5, 0.4, 2.0, 0.3)])
    x0 = make_triangle_history(2, 1.0, np.array([0.6, 0.8]))
    return lambda: integrate(model, zeta, x0, T=50.0, dt=1e-3)


def bench_eigensolver():
    rng = np.random.default_rng(1)
    mats = [np.ascontiguousarray((m + m.T) / 2)
            for m in rng.normal(size=(500, 6, 6))]
    return lambda: [_backend.jacobi_eigh(m) for m in mats]


def bench_norms():
    model = SystemModel(a=[[0.0]], pointwise=[([[-1.0]], 0)])
    zeta = DelaySignal(1.0, [SinusoidDelay(0.5, 0.4, 2.0, 0.3)])
    x0 = make_triangle_history(1, 1.0, np.array([1.0]))
    traj = integrate(model, zeta, x0, T=50.0, dt=1e-3)

    def work():
        _backend.sup_norm_hermite(traj.knots, traj.Y, traj.F, 0.0, traj.T)
        _backend.dsq_hermite(traj.knots, traj.Y, traj.F, 0.0, traj.T)
    return work


def bench_synthesis():
    m = np.array([[0.0]])
    n = np.array([[-1.0]])
    # infeasible probe: exercises the full restart budget
    return lambda: synthesize_certificate(m, n, 1.2, restarts=4,
                                          max_iters=150)


CASES = [
    ("integrate 50k-step 2x2 DDE", bench_integrate),
    ("jacobi eigensolver 500x 6x6", bench_eigensolver),
    ("trajectory sup-norm + W-integral", bench_norms),
    ("certificate synthesis (infeasible probe)", bench_synthesis),
]


def main():
    if "c" not in _backend.available_backends():
        print("compiled kernels not built; showing pure backend only")
        backends = ["pure"]
    else:
        backends = ["pure", "c"]
    rows = []
    for name, factory in CASES:
        times = {}
        for backend in backends:
            _backend.set_backend(backend)
            fn = factory()  # build inputs on the active backend
            times[backend] = timed(fn)
        rows.append((name, times))
    _backend.set_backend("auto")
    width = max(len(name) for name, _ in rows)
    header = f"{'case':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, times in rows:
        line = f"{name:<{width}}  " + "".join(
            f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{times['pure'] / times['c']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
