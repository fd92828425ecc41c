"""Time the numba and numpy kernel paths on the same inputs.

    python benchmarks/bench_backends.py [--repeat N]

The first numba call per kernel includes compilation and is reported
separately as ``warm-up``.  Both paths must produce identical outputs; the
script checks that before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from lgaxis import REFERENCE_GRID, EfficiencyProfile, reference_scenario
from lgaxis import kernels
from lgaxis._accel import HAVE_NUMBA


def _cases():
    cfg = reference_scenario()
    big = np.linspace(0.0, 5000.0, 1_000_000)
    xs, ys = np.meshgrid(np.linspace(-1500, 1500, 400), np.linspace(-1500, 1500, 400))
    prof = cfg.profile.kernel_args()
    sx, sy = REFERENCE_GRID.mesh()
    counts = np.rint(np.abs(np.sin(sx / 300.0) * 1000.0))
    n_cand = 200
    axes = np.column_stack([np.linspace(-80, -20, n_cand), np.linspace(-30, 30, n_cand)])
    radii = np.linspace(100, 300, n_cand)
    omegas = np.sqrt(2 * radii * (600 - radii))
    return {
        "poisson 1e6 (means 0..5000)": lambda b: kernels.poisson_counts(big, 1, backend=b),
        "poisson 1e6 (means < 30)": lambda b: kernels.poisson_counts(big / 200.0, 1, backend=b),
        "rate map 400x400": lambda b: kernels.rate_points(xs, ys, cfg.axis_xy, 200.0, cfg.theta_sum, 400.0,
                                                          prof, 100.0, 0.0, backend=b),
        "rate map 400x400 tabulated": lambda b: kernels.rate_points(
            xs, ys, cfg.axis_xy, 200.0, cfg.theta_sum, 400.0,
            EfficiencyProfile(table_r=tuple(np.linspace(0, 1500, 64)),
                              table_eta=tuple(np.linspace(1, 0, 64))).kernel_args(),
            100.0, 0.0, backend=b),
        "fit residuals 200 candidates": lambda b: kernels.fit_residuals(
            sx, sy, counts, axes, radii, omegas, cfg.theta_sum, prof, backend=b),
    }


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    print(f"{'kernel':<32}{'warm-up':>10}{'numba':>11}{'numpy':>11}{'speed-up':>10}")
    for name, fn in _cases().items():
        t0 = time.perf_counter()
        a = fn("numba")
        warm = time.perf_counter() - t0
        b = fn("numpy")
        for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            if x.dtype.kind == "i":
                assert np.array_equal(x, y), name
            else:
                np.testing.assert_allclose(x, y, rtol=1e-10, err_msg=name)
        t_nb = _time(lambda: fn("numba"), args.repeat)
        t_np = _time(lambda: fn("numpy"), args.repeat)
        print(f"{name:<32}{warm:>9.3f}s{t_nb * 1e3:>9.2f}ms{t_np * 1e3:>9.2f}ms{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
