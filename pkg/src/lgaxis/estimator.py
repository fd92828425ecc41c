"""Recover axis position and hologram-B geometry from coincidence scan maps.

Pipeline: :func:`locate_extrema` finds the rate maximum and the zero of the
scan, :func:`fit_geometry` fits ``(r_B, omega)`` along the one-parameter family
allowed by the max-min separation, and :func:`disambiguate` uses a second scan
taken after moving hologram B to pick one of the two dual solutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize, minimize_scalar

from . import kernels
from .errors import (
    AmbiguousExtremumError,
    FitFailureError,
    InconclusiveDisambiguationError,
)
from .forward import EfficiencyProfile, ScanGrid, ScanMap
from .lg import wrap_angle

DEFAULT_SMOOTHING = 1
N_RADIUS_SCAN = 200
SYMMETRY_THRESHOLD = 0.1
# When both candidates look symmetric, one must be at least this much more so.
DECISIVE_RATIO = 0.5
N_ANGULAR_BINS = 8
_SAMPLES_PER_BIN = 8
N_THETA_SCAN = 360
# Radius search range as a fraction of the max-min distance.
_FRAC_LO, _FRAC_HI = 0.01, 0.99


@dataclass(frozen=True)
class ExtremaReport:
    max_xy: tuple[float, float]
    min_xy: tuple[float, float]
    max_value: float
    min_value: float
    d: float
    phi_max: float
    max_cell: tuple[int, int]
    min_cell: tuple[int, int]
    flags: tuple[str, ...] = ()

    @property
    def direction(self) -> np.ndarray:
        """Unit vector from the maximum toward the minimum."""
        return (np.subtract(self.min_xy, self.max_xy)) / self.d


@dataclass(frozen=True)
class GeometryCandidate:
    r_b: float
    omega: float
    axis_xy: tuple[float, float]
    residual: float
    scale: float


@dataclass(frozen=True)
class GeometryFit:
    extrema: ExtremaReport
    candidates: tuple[GeometryCandidate, GeometryCandidate]
    theta_sum: float
    profile: EfficiencyProfile = field(default_factory=EfficiencyProfile)
    chosen: int | None = None
    theta_b: float | None = None
    delta: float | None = None
    aux_asymmetry: tuple[float, float] | None = None
    predicted_asymmetry: tuple[float, float] | None = None
    located: ExtremaReport | None = None

    @property
    def flags(self) -> tuple[str, ...]:
        return self.extrema.flags

    @property
    def best(self) -> GeometryCandidate:
        """Chosen candidate, or the lower-residual one before disambiguation."""
        if self.chosen is not None:
            return self.candidates[self.chosen]
        return min(self.candidates, key=lambda c: c.residual)


# --------------------------------------------------------------------------
# extrema
# --------------------------------------------------------------------------


def box_smooth(values: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2 radius + 1)^2 box, using only cells inside the grid."""
    values = np.asarray(values, dtype=np.float64)
    if radius <= 0:
        return values.copy()
    size = 2 * int(radius) + 1
    total = ndimage.uniform_filter(values, size=size, mode="constant", cval=0.0)
    weight = ndimage.uniform_filter(np.ones_like(values), size=size, mode="constant", cval=0.0)
    return total / weight


def _on_edge(cell, shape) -> bool:
    iy, ix = cell
    return iy in (0, shape[0] - 1) or ix in (0, shape[1] - 1)


def _refine(values: np.ndarray, cell, want_max: bool) -> tuple[float, float]:
    """Sub-cell (ix, iy) of an extremum from a quadratic fit to its 3x3 block.

    Falls back to the cell centre on the boundary, when the quadratic has the
    wrong curvature, or when its stationary point leaves the block.
    """
    iy, ix = cell
    if _on_edge(cell, values.shape):
        return float(ix), float(iy)
    block = values[iy - 1:iy + 2, ix - 1:ix + 2]
    u, v = np.meshgrid([-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0])
    design = np.column_stack([np.ones(9), u.ravel(), v.ravel(), u.ravel() ** 2,
                              (u * v).ravel(), v.ravel() ** 2])
    c = np.linalg.lstsq(design, block.ravel(), rcond=None)[0]
    hess = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
    eig = np.linalg.eigvalsh(hess)
    if (want_max and not np.all(eig < 0)) or (not want_max and not np.all(eig > 0)):
        return float(ix), float(iy)
    du, dv = np.linalg.solve(hess, -c[1:3])
    if abs(du) > 1.0 or abs(dv) > 1.0:
        return float(ix), float(iy)
    return ix + du, iy + dv


def _snap(values: np.ndarray, cell, want_max: bool) -> tuple[int, int]:
    """Raw extremum within the 3x3 block around ``cell``."""
    iy, ix = cell
    y0, x0 = max(iy - 1, 0), max(ix - 1, 0)
    block = values[y0:iy + 2, x0:ix + 2]
    k = np.argmax(block) if want_max else np.argmin(block)
    by, bx = np.unravel_index(k, block.shape)
    return int(y0 + by), int(x0 + bx)


def _strict_interior_minima(sm: np.ndarray) -> list[tuple[int, int]]:
    ring = np.ones((3, 3), dtype=bool)
    ring[1, 1] = False
    neigh_min = ndimage.minimum_filter(sm, footprint=ring, mode="nearest")
    mask = sm < neigh_min
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = False
    return [tuple(int(i) for i in c) for c in np.argwhere(mask)]


def locate_extrema(scan: ScanMap, smoothing_radius: int = DEFAULT_SMOOTHING) -> ExtremaReport:
    """Find the rate maximum and the coincidence zero of a scan.

    The maximum is the argmax of the box-smoothed counts.  It is ambiguous if a
    non-adjacent local maximum comes within sqrt(max count) of it.  The
    minimum is the strict interior local minimum with the largest depth below
    its eight neighbours, so zero plateaus where the efficiency has died out
    are not mistaken for it.  Smoothing only picks the cells: each extremum
    then snaps to the raw-count extremum of its 3x3 block and is refined to
    sub-cell precision by a quadratic fit to the raw counts there.
    """
    if scan.grid.nx < 3 or scan.grid.ny < 3:
        raise ValueError("locate_extrema needs at least a 3 x 3 grid")
    if smoothing_radius < 0:
        raise ValueError("smoothing_radius must be >= 0")
    sm = box_smooth(scan.counts, smoothing_radius)
    shape = sm.shape
    flags = []

    max_cell = tuple(int(i) for i in np.unravel_index(np.argmax(sm), shape))
    top = sm[max_cell]
    tol = math.sqrt(scan.counts.max())
    is_peak = sm >= ndimage.maximum_filter(sm, size=3, mode="nearest")
    yy, xx = np.indices(shape)
    far = np.maximum(abs(yy - max_cell[0]), abs(xx - max_cell[1])) > 1
    if np.any(is_peak & far & (top - sm <= tol)):
        raise AmbiguousExtremumError(
            f"two separated maxima within counting noise ({tol:.3g} counts) of each other")
    if _on_edge(max_cell, shape):
        flags.append("edge-max")

    minima = _strict_interior_minima(sm)
    if minima:
        ring = np.ones((3, 3)) / 8.0
        ring[1, 1] = 0.0
        depth = ndimage.convolve(sm, ring, mode="nearest") - sm
        min_cell = max(minima, key=lambda c: depth[c])
    else:
        flags.append("no-interior-min")
        min_cell = tuple(int(i) for i in np.unravel_index(np.argmin(sm), shape))
    if _on_edge(min_cell, shape):
        flags.append("edge-min")

    grid = scan.grid
    raw = scan.counts.astype(np.float64)
    max_xy = grid.point(*_refine(raw, _snap(raw, max_cell, want_max=True), want_max=True))
    min_xy = grid.point(*_refine(raw, _snap(raw, min_cell, want_max=False), want_max=False))
    d = math.dist(max_xy, min_xy)
    if d == 0.0:
        raise AmbiguousExtremumError("maximum and minimum coincide")
    phi = math.atan2(max_xy[1] - min_xy[1], max_xy[0] - min_xy[0])
    return ExtremaReport(
        max_xy=max_xy, min_xy=min_xy,
        max_value=float(top / scan.dwell), min_value=float(sm[min_cell] / scan.dwell),
        d=d, phi_max=phi, max_cell=max_cell, min_cell=min_cell, flags=tuple(flags))


# --------------------------------------------------------------------------
# constrained fit
# --------------------------------------------------------------------------


def _constrained(extrema: ExtremaReport, r_b):
    """Axis and omega for radii ``r_b`` on the max-min separation constraint."""
    r_b = np.asarray(r_b, dtype=np.float64)
    omega = np.sqrt(2.0 * r_b * (extrema.d - r_b))
    axes = np.asarray(extrema.max_xy)[None, :] + r_b.reshape(-1, 1) * extrema.direction[None, :]
    return axes, omega


def _residuals(scan: ScanMap, extrema: ExtremaReport, profile: EfficiencyProfile, r_b, backend):
    xs, ys = scan.grid.mesh()
    axes, omega = _constrained(extrema, r_b)
    return kernels.fit_residuals(xs, ys, scan.counts, axes, r_b, omega, extrema.phi_max,
                                 profile.kernel_args(), backend=backend)


def _candidate(scan, extrema, profile, r_b, backend) -> GeometryCandidate:
    axes, omega = _constrained(extrema, [r_b])
    resid, scale = _residuals(scan, extrema, profile, [r_b], backend)
    return GeometryCandidate(r_b=float(r_b), omega=float(omega[0]),
                             axis_xy=(float(axes[0, 0]), float(axes[0, 1])),
                             residual=float(resid[0]), scale=float(scale[0]))


def _report_from(located: ExtremaReport, max_xy, min_xy) -> ExtremaReport:
    d = math.dist(max_xy, min_xy)
    phi = math.atan2(max_xy[1] - min_xy[1], max_xy[0] - min_xy[0])
    return replace(located, max_xy=(float(max_xy[0]), float(max_xy[1])),
                   min_xy=(float(min_xy[0]), float(min_xy[1])), d=d, phi_max=phi)


def _joint_objective(scan, located, profile, backend):
    xs, ys = scan.grid.mesh()
    kargs = profile.kernel_args()

    def objective(p):
        mx, my, nx_, ny_, frac = p
        if not _FRAC_LO <= frac <= _FRAC_HI:
            return math.inf
        dx, dy = nx_ - mx, ny_ - my
        d = math.hypot(dx, dy)
        if d == 0.0:
            return math.inf
        r_b = frac * d
        omega = math.sqrt(2.0 * r_b * (d - r_b))
        axis = (mx + frac * dx, my + frac * dy)
        resid, _ = kernels.fit_residuals(xs, ys, scan.counts, [axis], [r_b], [omega],
                                         math.atan2(-dy, -dx), kargs, backend=backend)
        return float(resid[0])

    return objective


def fit_geometry(scan: ScanMap, extrema: ExtremaReport, profile: EfficiencyProfile | None = None,
                 n_scan: int = N_RADIUS_SCAN, refine: bool = True,
                 backend: str | None = None) -> GeometryFit:
    """Fit ``(r_B, omega)`` subject to ``r_B + omega^2 / (2 r_B) = d``.

    Radii are scanned log-uniformly over (0.01 d, 0.99 d); each sets omega and
    puts the axis ``r_B`` from the maximum toward the minimum.  Residuals are
    ``sum (c - kappa eta P)^2 / max(c, 1)`` with the scale ``kappa`` free.

    The best radius is then polished by Nelder-Mead over the radius *and*
    the two extremum positions, because grid-level extrema are biased by the
    efficiency envelope.  The constraint holds throughout, so the result and
    its dual ``d - r_B`` (same omega) are reported against the refined
    extrema, which replace ``extrema`` in the returned fit.
    """
    profile = profile or EfficiencyProfile()
    d = extrema.d
    if not d > 0.0:
        raise FitFailureError("extrema separation must be positive")
    radii = np.geomspace(_FRAC_LO * d, _FRAC_HI * d, n_scan)
    resid, _ = _residuals(scan, extrema, profile, radii, backend)
    if not np.all(np.isfinite(resid)):
        raise FitFailureError("non-finite residuals")
    best = int(np.argmin(resid))
    if best in (0, n_scan - 1):
        raise FitFailureError("residual landscape has no interior minimum")
    res = minimize_scalar(
        lambda r: float(_residuals(scan, extrema, profile, [r], backend)[0][0]),
        bounds=(radii[best - 1], radii[best + 1]), method="bounded",
        options={"xatol": 1e-6 * d})
    r_star = float(res.x) if res.fun <= resid[best] else float(radii[best])
    refined = extrema
    if refine:
        objective = _joint_objective(scan, extrema, profile, backend)
        x0 = np.array([*extrema.max_xy, *extrema.min_xy, r_star / d])
        h = 0.5 * scan.grid.step
        simplex = np.vstack([x0] + [x0 + np.eye(5)[i] * (h if i < 4 else 0.05) for i in range(5)])
        out = minimize(objective, x0, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "xatol": 1e-4, "fatol": 1e-9,
                                "maxiter": 4000, "maxfev": 8000})
        if out.fun < objective(x0):
            refined = _report_from(extrema, out.x[:2], out.x[2:4])
            r_star = float(out.x[4]) * refined.d
            if min(out.x[4], 1.0 - out.x[4]) < 1.1 * _FRAC_LO:
                raise FitFailureError("refined radius ran into the edge of the search range")
    pair = sorted([r_star, refined.d - r_star])
    cands = tuple(_candidate(scan, refined, profile, r, backend) for r in pair)
    return GeometryFit(extrema=refined, candidates=cands, theta_sum=wrap_angle(refined.phi_max),
                       profile=profile, located=extrema)


# --------------------------------------------------------------------------
# disambiguation
# --------------------------------------------------------------------------


def _bilinear(values: np.ndarray, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    return ndimage.map_coordinates(values, [fy, fx], order=1, mode="nearest")


def asymmetry(values: np.ndarray, grid: ScanGrid, center_xy, smoothing_radius: int = 0) -> float:
    """Angular non-uniformity of a map about ``center_xy``.

    Rings of radius k * step (k >= 1, fully inside the grid) are sampled
    around the centre; on the ring with the largest mean the samples are
    averaged into 8 angular bins and the variance of the bin means divided by
    the squared ring mean is returned.  Bin averaging already smooths along
    the ring; box smoothing on top washes out the contrast, hence the default
    ``smoothing_radius=0``.
    """
    sm = box_smooth(values, smoothing_radius)
    cx = (center_xy[0] - grid.x0) / grid.step
    cy = (center_xy[1] - grid.y0) / grid.step
    n = N_ANGULAR_BINS * _SAMPLES_PER_BIN
    ang = (np.arange(n) + 0.5) * 2.0 * math.pi / n
    best = None
    k = 1
    while True:
        fx = cx + k * np.cos(ang)
        fy = cy + k * np.sin(ang)
        if fx.min() < 0 or fy.min() < 0 or fx.max() > grid.nx - 1 or fy.max() > grid.ny - 1:
            break
        samples = _bilinear(sm, fx, fy)
        if best is None or samples.mean() > best.mean():
            best = samples
        k += 1
    if best is None:
        raise InconclusiveDisambiguationError("no sampling ring around the axis fits inside the aux grid")
    mean = best.mean()
    if mean <= 0.0:
        return math.inf
    bins = best.reshape(N_ANGULAR_BINS, _SAMPLES_PER_BIN).mean(axis=1)
    return float(bins.var() / mean ** 2)


def _shifted_b(cand: GeometryCandidate, theta_b: float, shift) -> tuple[float, float]:
    bx = cand.r_b * math.cos(theta_b) + shift[0]
    by = cand.r_b * math.sin(theta_b) + shift[1]
    r_new = math.hypot(bx, by)
    return r_new, (math.atan2(by, bx) if r_new > 0 else 0.0)


def _predicted_values(cand: GeometryCandidate, theta_sum: float, theta_b: float, shift,
                      grid: ScanGrid, profile: EfficiencyProfile, backend):
    r_new, th_new = _shifted_b(cand, theta_b, shift)
    xs, ys = grid.mesh()
    return kernels.rate_points(xs, ys, cand.axis_xy, r_new, th_new + theta_sum - theta_b,
                               cand.omega, profile.kernel_args(), 1.0, 0.0, backend=backend)


def _fit_theta_b(fit: GeometryFit, cand: GeometryCandidate, aux: ScanMap, shift, backend) -> float:
    """theta_B minimising the aux-map residual for a fixed candidate."""
    xs, ys = aux.grid.mesh()
    thetas = -math.pi + 2.0 * math.pi * (np.arange(N_THETA_SCAN) + 1) / N_THETA_SCAN
    vals = []
    for theta_b in thetas:
        r_new, th_new = _shifted_b(cand, theta_b, shift)
        out, _ = kernels.fit_residuals(xs, ys, aux.counts, [cand.axis_xy], [r_new], [cand.omega],
                                       th_new + fit.theta_sum - theta_b,
                                       fit.profile.kernel_args(), backend=backend)
        vals.append(out[0])
    return float(thetas[int(np.argmin(vals))])


def disambiguate(fit: GeometryFit, aux_map: ScanMap, aux_shift, threshold: float = SYMMETRY_THRESHOLD,
                 smoothing_radius: int = 0, backend: str | None = None) -> GeometryFit:
    """Choose between the two dual candidates using a scan taken after moving
    hologram B by ``aux_shift`` (stage micrometers, same axes as the scan).

    Each candidate is taken to be oriented so the shift cancels it as far as
    possible (theta_B along ``-aux_shift``), which predicts whether the aux map
    should look rotationally symmetric about that candidate's axis.  A
    candidate is confirmed when prediction and measurement are both
    symmetric, refuted when they disagree, and uninformative when both are
    asymmetric.  A single confirmed candidate wins (if both are confirmed,
    the one with under half the other's measured asymmetry); otherwise a
    single refuted one hands the choice to the other; anything else is
    inconclusive.

    theta_B is the direction of ``-aux_shift`` for a confirmed candidate and is
    fitted on the aux map otherwise.
    """
    shift = (float(aux_shift[0]), float(aux_shift[1]))
    s_norm = math.hypot(*shift)
    theta_guess = math.atan2(-shift[1], -shift[0]) if s_norm > 0 else fit.theta_sum

    measured = tuple(asymmetry(aux_map.counts, aux_map.grid, c.axis_xy, smoothing_radius)
                     for c in fit.candidates)
    predicted = tuple(
        asymmetry(_predicted_values(c, fit.theta_sum, theta_guess, shift, aux_map.grid,
                                    fit.profile, backend), aux_map.grid, c.axis_xy,
                  smoothing_radius)
        for c in fit.candidates)
    sym_m = [m < threshold for m in measured]
    sym_p = [p < threshold for p in predicted]
    confirmed = [i for i in range(2) if sym_m[i] and sym_p[i]]
    refuted = [i for i in range(2) if sym_m[i] != sym_p[i]]
    if len(confirmed) == 2:
        lo, hi = sorted(range(2), key=lambda i: measured[i])
        if measured[lo] < DECISIVE_RATIO * measured[hi]:
            confirmed = [lo]
    if len(confirmed) == 1 and confirmed[0] not in refuted:
        chosen = confirmed[0]
        theta_b = theta_guess
    elif not confirmed and len(refuted) == 1:
        chosen = 1 - refuted[0]
        theta_b = _fit_theta_b(fit, fit.candidates[chosen], aux_map, shift, backend)
    else:
        raise InconclusiveDisambiguationError(
            f"aux scan does not separate the candidates (measured asymmetry "
            f"{measured[0]:.3g}, {measured[1]:.3g}; predicted {predicted[0]:.3g}, {predicted[1]:.3g})")
    return replace(fit, chosen=chosen, theta_b=wrap_angle(theta_b),
                   delta=wrap_angle(fit.theta_sum - theta_b), aux_asymmetry=measured,
                   predicted_asymmetry=predicted)


def estimate_axis(scan: ScanMap, profile: EfficiencyProfile | None = None,
                  aux_map: ScanMap | None = None, aux_shift=None,
                  smoothing_radius: int = DEFAULT_SMOOTHING, backend: str | None = None) -> GeometryFit:
    """locate_extrema -> fit_geometry -> disambiguate (when an aux scan is given)."""
    extrema = locate_extrema(scan, smoothing_radius)
    fit = fit_geometry(scan, extrema, profile, backend=backend)
    if aux_map is not None:
        if aux_shift is None:
            raise ValueError("aux_map needs aux_shift")
        fit = disambiguate(fit, aux_map, aux_shift, backend=backend)
    return fit
