"""Acceptance criteria 1-10.

Each test prints one ``[PASS]``/``[FAIL]`` line (shown even under capture) and
then asserts.  Run ``python tests/test_acceptance.py`` for the summary alone.
"""
from __future__ import annotations

import math
import os
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from lgaxis import (
    CANONICAL,
    REFERENCE_GRID,
    BeamGeometry,
    HologramPose,
    SourceState,
    coincidence_probability,
    coincidence_probability_oracle,
    estimate_axis,
    hologram_output_state,
    basis_minus,
    min_max_distance,
    noiseless_scan,
    optimal_radius,
    reference_scenario,
    phase_between,
    predict_s,
    shift_hologram_b,
    simulate_scan,
    time_reverse,
)
from lgaxis.chsh import s_from_quads
from lgaxis.io import load_bell_counts

AUX_SHIFT = (0.0, 200.0)
TRUE_R_B, TRUE_OMEGA, TRUE_THETA_B, TRUE_DELTA = 200.0, 400.0, -math.pi / 2, math.pi
TRUE_AXIS = (-50.0, 0.0)
# Seeds for the noisy runs, fixed before any run was looked at.
NOISY_SCAN_SEEDS = [1000 + k for k in range(50)]
NOISY_AUX_SEEDS = [5000 + k for k in range(50)]


def _angle_err(a, b):
    return abs(math.remainder(a - b, 2 * math.pi))


def _report(number: int, title: str, ok: bool, detail: str, capsys=None) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)


# --------------------------------------------------------------------------
# criteria, each returning (ok, detail)
# --------------------------------------------------------------------------


def criterion_1():
    t0 = time.perf_counter()
    s = abs(s_from_quads(load_bell_counts()))
    dt = time.perf_counter() - t0
    return abs(s - 2.127) <= 1e-3 and dt < 1.0, f"|S| = {s:.5f}, {dt * 1e3:.1f} ms"


def criterion_2():
    t0 = time.perf_counter()
    s = abs(predict_s(CANONICAL, 200.0, BeamGeometry(400.0), SourceState(0.5, 0.0)))
    s_pi = abs(predict_s(CANONICAL, 200.0, BeamGeometry(400.0), SourceState(0.5, math.pi)))
    dt = time.perf_counter() - t0
    return abs(s - 2.263) <= 0.01 and dt < 1.0, f"|S| = {s:.5f} at delta=0, {s_pi:.5f} at delta=pi"


def criterion_3():
    beam = BeamGeometry(400.0)
    s = abs(predict_s(CANONICAL, beam.omega / math.sqrt(2), beam))
    r_opt = optimal_radius(beam)
    ok = abs(s - 2 * math.sqrt(2)) <= 1e-9 and abs(r_opt - 282.84) <= 0.01
    return ok, f"|S| - 2 sqrt 2 = {s - 2 * math.sqrt(2):.1e}, r_opt = {r_opt:.4f}"


def criterion_4():
    rng = np.random.default_rng(4)
    worst_max = worst_min = 0.0
    for _ in range(1000):
        r_b = rng.uniform(1.0, 2000.0)
        beam = BeamGeometry(rng.uniform(10.0, 2000.0))
        source = SourceState(rng.uniform(0.01, 0.5), rng.uniform(-math.pi, math.pi))
        theta_b = rng.uniform(-math.pi, math.pi)
        pb = HologramPose(r_b, theta_b)
        p_max = coincidence_probability(HologramPose(r_b, source.delta + theta_b), pb, source, beam)
        p_min = coincidence_probability(
            HologramPose(beam.omega ** 2 / (2 * r_b), math.pi + source.delta + theta_b), pb, source, beam)
        worst_max = max(worst_max, abs(p_max - source.alpha_sq))
        worst_min = max(worst_min, abs(p_min))
    return max(worst_max, worst_min) <= 1e-12, f"max dev {worst_max:.1e} / zero dev {worst_min:.1e}"


def criterion_5():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(10_000):
        ra, rb = rng.uniform(0.0, 2000.0, 2)
        ta, tb, d = rng.uniform(-math.pi, math.pi, 3)
        args = (HologramPose(ra, ta), HologramPose(rb, tb), SourceState(rng.uniform(0.01, 0.5), d),
                BeamGeometry(rng.uniform(10.0, 2000.0)))
        worst = max(worst, abs(coincidence_probability(*args) - coincidence_probability_oracle(*args)))
    return worst <= 1e-10, f"max |closed form - projection| = {worst:.1e} over 10^4"


def criterion_6():
    beam = BeamGeometry(400.0)
    d = min_max_distance(200.0, beam)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(1000):
        r = rng.uniform(1.0, 5000.0)
        w = BeamGeometry(rng.uniform(10.0, 2000.0))
        worst = max(worst, abs(min_max_distance(r, w) / min_max_distance(w.omega ** 2 / (2 * r), w) - 1))
    return d == 600.0 and worst <= 1e-12, f"d(200) = {d!r}, duality rel dev {worst:.1e}"


def _round_trip_errors(fit):
    best = fit.best
    return {
        "r_b": abs(best.r_b / TRUE_R_B - 1),
        "omega": abs(best.omega / TRUE_OMEGA - 1),
        "theta_b": _angle_err(fit.theta_b, TRUE_THETA_B) if fit.theta_b is not None else math.inf,
        "delta": _angle_err(fit.delta, TRUE_DELTA) if fit.delta is not None else math.inf,
        "axis": max(abs(best.axis_xy[0] - TRUE_AXIS[0]), abs(best.axis_xy[1] - TRUE_AXIS[1])),
    }


def _within_7(err):
    return (err["r_b"] <= 0.10 and err["omega"] <= 0.10 and err["theta_b"] <= 0.15
            and err["delta"] <= 0.15 and err["axis"] <= 75.0)


def criterion_7():
    t0 = time.perf_counter()
    cfg = reference_scenario()
    scan = noiseless_scan(cfg, REFERENCE_GRID)
    aux = noiseless_scan(shift_hologram_b(cfg, AUX_SHIFT), REFERENCE_GRID)
    fit = estimate_axis(scan, aux_map=aux, aux_shift=AUX_SHIFT)
    dt = time.perf_counter() - t0
    err = _round_trip_errors(fit)
    best = fit.best
    detail = (f"r_B={best.r_b:.2f} omega={best.omega:.2f} axis=({best.axis_xy[0]:.1f}, {best.axis_xy[1]:.1f}) "
              f"theta_B={fit.theta_b:.4f} delta={fit.delta:.4f}, {dt:.2f} s")
    return _within_7(err) and dt < 30.0, detail


def criterion_8():
    base = reference_scenario()
    aux_cfg = shift_hologram_b(base, AUX_SHIFT)
    good = 0
    worst = 0.0
    for s_scan, s_aux in zip(NOISY_SCAN_SEEDS, NOISY_AUX_SEEDS):
        scan = simulate_scan(reference_scenario(seed=s_scan), REFERENCE_GRID, dwell=12.2)
        aux = simulate_scan(replace(aux_cfg, seed=s_aux), REFERENCE_GRID, dwell=12.2)
        try:
            err = _round_trip_errors(estimate_axis(scan, aux_map=aux, aux_shift=AUX_SHIFT))
        except Exception:  # a failed run simply does not count
            continue
        if err["r_b"] <= 0.10 and err["omega"] <= 0.10:
            good += 1
            worst = max(worst, err["r_b"], err["omega"])
    return good >= 45, f"{good}/50 runs within 10 %, worst accepted error {100 * worst:.2f} %"


_DIGEST_SCRIPT = r"""
import hashlib, math, sys
from lgaxis import CANONICAL, REFERENCE_GRID, BeamGeometry, SourceState, reference_scenario, simulate_scan
from lgaxis.chsh import simulate_chsh_counts
from lgaxis.io import quads_to_text, scan_map_to_text
backend = sys.argv[1]
h = hashlib.sha256()
for seed in (1, 2024, 2**64 - 1):
    scan = simulate_scan(reference_scenario(seed=seed), REFERENCE_GRID, backend=backend)
    h.update(scan_map_to_text(scan).encode())
    h.update(scan_map_to_text(scan, "json").encode())
    quads = simulate_chsh_counts(CANONICAL, 200.0, BeamGeometry(400.0), SourceState(0.5, math.pi),
                                 100.0, 5.0, seed, backend=backend)
    h.update(quads_to_text(quads).encode())
print(h.hexdigest())
"""


def _digest(threads: int, backend: str) -> str:
    env = {**os.environ, "NUMBA_NUM_THREADS": str(threads)}
    out = subprocess.run([sys.executable, "-c", _DIGEST_SCRIPT, backend], env=env, check=True,
                         capture_output=True, text=True)
    return out.stdout.strip()


def criterion_9():
    runs = {(t, b): _digest(t, b) for t in (1, 4) for b in ("numba", "numpy")}
    again = _digest(4, "numba")
    ok = len(set(runs.values())) == 1 and again == runs[(4, "numba")]
    return ok, f"{len(runs) + 1} runs (threads 1/4, numba/numpy), digest {again[:12]}"


def criterion_10():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(1000):
        pose = HologramPose(rng.uniform(0.0, 3000.0), rng.uniform(-math.pi, math.pi))
        beam = BeamGeometry(rng.uniform(10.0, 2000.0))
        u = phase_between(time_reverse(hologram_output_state(pose, beam)), basis_minus(pose, beam), tol=1e-12)
        if u is None:
            return False, "found a pose without unit-modulus proportionality"
        worst = max(worst, abs(abs(u) - 1.0))
    return worst <= 1e-12, f"1000 poses, max ||u| - 1| = {worst:.1e}"


CRITERIA = {
    1: ("bundled counts |S| = 2.127", criterion_1),
    2: ("model |S| = 2.263 at r = 200", criterion_2),
    3: ("Tsirelson point and optimal radius", criterion_3),
    4: ("probability extrema", criterion_4),
    5: ("closed form vs projection oracle", criterion_5),
    6: ("max-min distance and duality", criterion_6),
    7: ("noiseless reference round trip", criterion_7),
    8: ("noisy round-trip robustness", criterion_8),
    9: ("determinism across runs and threads", criterion_9),
    10: ("time-reversal proportionality", criterion_10),
}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_acceptance(number, capsys):
    title, fn = CRITERIA[number]
    ok, detail = fn()
    _report(number, title, ok, detail, capsys)
    assert ok, detail


if __name__ == "__main__":
    results = []
    for n in sorted(CRITERIA):
        title, fn = CRITERIA[n]
        ok, detail = fn()
        _report(n, title, ok, detail)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
