"""Coincidence-probability model and synthetic scan maps.

Stage coordinates are micrometers.  A scan moves the dislocation of hologram A
over a rectangular grid; the pose of hologram A is the polar position of the
stage point relative to the optical axis ``axis_xy``.

Count arrays are indexed ``counts[iy, ix]`` and grid point ``(ix, iy)`` has
flat index ``iy * nx + ix``, which is also its random stream number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import numpy as np

from . import kernels
from .errors import DegenerateInputError, ValidationError
from .lg import (
    BeamGeometry,
    HologramPose,
    LgKet,
    SourceState,
    basis_minus,
    basis_plus,
    wrap_angle,
)

DEFAULT_SEED = 20070601
# 40 minutes spread over a 14 x 14 grid.
DEFAULT_DWELL = 12.2


@dataclass(frozen=True)
class EfficiencyProfile:
    """Radial diffraction efficiency of hologram A.

    Parametric form ``eta0 * max(0, 1 - (r / r_cut) ** power)``; pass
    ``table_r``/``table_eta`` to use a measured profile with linear
    interpolation instead (held constant beyond the table ends).
    """

    eta0: float = 1.0
    r_cut: float = 1000.0
    power: float = 2.0
    table_r: tuple[float, ...] | None = None
    table_eta: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (0.0 < self.eta0 <= 1.0):
            raise ValidationError("EfficiencyProfile.eta0", f"must lie in (0, 1], got {self.eta0!r}")
        if not self.r_cut > 0.0:
            raise ValidationError("EfficiencyProfile.r_cut", f"must be > 0, got {self.r_cut!r}")
        if not self.power >= 1.0:
            raise ValidationError("EfficiencyProfile.power", f"must be >= 1, got {self.power!r}")
        if (self.table_r is None) != (self.table_eta is None):
            raise ValidationError("EfficiencyProfile.table", "table_r and table_eta go together")
        if self.table_r is not None:
            r = tuple(float(v) for v in self.table_r)
            eta = tuple(float(v) for v in self.table_eta)
            if len(r) != len(eta) or len(r) < 2:
                raise ValidationError("EfficiencyProfile.table", "needs >= 2 matching (r, eta) pairs")
            if r[0] < 0.0 or any(b <= a for a, b in zip(r, r[1:])):
                raise ValidationError("EfficiencyProfile.table_r", "must be >= 0 and strictly increasing")
            if any(not 0.0 <= e <= 1.0 for e in eta):
                raise ValidationError("EfficiencyProfile.table_eta", "values must lie in [0, 1]")
            object.__setattr__(self, "table_r", r)
            object.__setattr__(self, "table_eta", eta)

    @classmethod
    def flat(cls, eta0: float = 1.0) -> "EfficiencyProfile":
        """Position-independent efficiency."""
        return cls(eta0=eta0, r_cut=math.inf)

    @property
    def tabulated(self) -> bool:
        return self.table_r is not None

    def kernel_args(self):
        if self.tabulated:
            return (kernels.PROFILE_TABLE, self.eta0, self.r_cut, self.power,
                    np.asarray(self.table_r), np.asarray(self.table_eta))
        empty = np.zeros(1)
        return (kernels.PROFILE_POWER, self.eta0, self.r_cut, self.power, empty, empty)


@dataclass(frozen=True)
class ScanGrid:
    x0: float
    y0: float
    step: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.step > 0.0:
            raise ValidationError("ScanGrid.step", f"must be > 0, got {self.step!r}")
        for name in ("nx", "ny"):
            v = getattr(self, name)
            if int(v) != v or v < 2:
                raise ValidationError(f"ScanGrid.{name}", f"must be an integer >= 2, got {v!r}")
            object.__setattr__(self, name, int(v))
        object.__setattr__(self, "x0", float(self.x0))
        object.__setattr__(self, "y0", float(self.y0))
        object.__setattr__(self, "step", float(self.step))

    @property
    def shape(self) -> tuple[int, int]:
        return self.ny, self.nx

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def xs(self) -> np.ndarray:
        return self.x0 + self.step * np.arange(self.nx)

    def ys(self) -> np.ndarray:
        return self.y0 + self.step * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Stage coordinates, each of shape ``(ny, nx)``."""
        return np.meshgrid(self.xs(), self.ys())

    def point(self, ix: float, iy: float) -> tuple[float, float]:
        """Stage coordinates of (possibly fractional) grid indices."""
        return self.x0 + self.step * ix, self.y0 + self.step * iy


REFERENCE_GRID = ScanGrid(x0=-1100.0, y0=-1000.0, step=150.0, nx=14, ny=14)


@dataclass(frozen=True, eq=False)
class ScanMap:
    grid: ScanGrid
    dwell: float
    counts: np.ndarray
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dwell > 0.0:
            raise ValidationError("ScanMap.dwell", f"must be > 0, got {self.dwell!r}")
        counts = np.asarray(self.counts)
        if counts.size != self.grid.size:
            raise ValidationError("ScanMap.counts", f"expected {self.grid.size} values, got {counts.size}")
        if counts.dtype.kind == "f":
            if not np.all(np.isfinite(counts)) or np.any(counts != np.round(counts)):
                raise ValidationError("ScanMap.counts", "counts must be integers")
        counts = counts.astype(np.int64).reshape(self.grid.shape)
        if np.any(counts < 0):
            raise ValidationError("ScanMap.counts", "counts must be >= 0")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "dwell", float(self.dwell))
        object.__setattr__(self, "metadata", dict(self.metadata))

    def __eq__(self, other):
        if not isinstance(other, ScanMap):
            return NotImplemented
        return (self.grid == other.grid and self.dwell == other.dwell
                and np.array_equal(self.counts, other.counts) and self.metadata == other.metadata)

    @property
    def rates(self) -> np.ndarray:
        return self.counts / self.dwell


@dataclass(frozen=True)
class ExperimentConfig:
    axis_xy: tuple[float, float] = (0.0, 0.0)
    pose_b: HologramPose = HologramPose(200.0, 0.0)
    source: SourceState = SourceState()
    beam: BeamGeometry = BeamGeometry(400.0)
    profile: EfficiencyProfile = EfficiencyProfile()
    peak_rate: float = 100.0
    background_rate: float = 0.0
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        ax, ay = (float(v) for v in self.axis_xy)
        object.__setattr__(self, "axis_xy", (ax, ay))
        if not self.peak_rate > 0.0:
            raise ValidationError("ExperimentConfig.peak_rate", f"must be > 0, got {self.peak_rate!r}")
        if not self.background_rate >= 0.0:
            raise ValidationError("ExperimentConfig.background_rate",
                                  f"must be >= 0, got {self.background_rate!r}")
        if int(self.seed) != self.seed:
            raise ValidationError("ExperimentConfig.seed", "must be an integer")
        object.__setattr__(self, "seed", int(self.seed) & kernels.MASK64)

    @property
    def theta_sum(self) -> float:
        """theta_B + delta: direction of the rate maximum seen from the axis."""
        return wrap_angle(self.pose_b.theta + self.source.delta)

    def pose_a(self, stage_xy) -> HologramPose:
        return HologramPose.from_xy(stage_xy[0] - self.axis_xy[0], stage_xy[1] - self.axis_xy[1])


# Hologram-B poses of the nine-map series, panels (a)-(i); panel (e) is the
# on-axis reference.
NINE_POSE_SERIES: tuple[HologramPose, ...] = tuple(
    HologramPose(r, t) for r, t in (
        (200.0, 3 * math.pi / 4), (200.0, math.pi / 2), (200.0, math.pi / 4), (200.0, math.pi),
        (0.0, 0.0), (200.0, 0.0), (200.0, math.pi / 2), (200.0, -math.pi / 2), (200.0, -math.pi / 4)))


def pose_series_maps(config: ExperimentConfig, grid: ScanGrid,
                     poses=NINE_POSE_SERIES, backend: str | None = None) -> list[np.ndarray]:
    """Noiseless rate maps with hologram B at each pose in turn."""
    return [analytic_map(replace(config, pose_b=p), grid, backend=backend) for p in poses]


def reference_scenario(**overrides) -> ExperimentConfig:
    """Operating point recovered in the experiment: axis at (-50, 0) um,
    hologram B at (200 um, -pi/2), delta = pi, omega = 400 um."""
    cfg = ExperimentConfig(
        axis_xy=(-50.0, 0.0),
        pose_b=HologramPose(200.0, -math.pi / 2),
        source=SourceState(0.5, math.pi),
        beam=BeamGeometry(400.0),
    )
    return replace(cfg, **overrides)


def shift_hologram_b(config: ExperimentConfig, shift_xy) -> ExperimentConfig:
    """Config with the hologram-B dislocation displaced by ``shift_xy``."""
    bx, by = config.pose_b.xy
    return replace(config, pose_b=HologramPose.from_xy(bx + shift_xy[0], by + shift_xy[1]))


# --------------------------------------------------------------------------
# coincidence probability
# --------------------------------------------------------------------------


def coincidence_probability(pose_a: HologramPose, pose_b: HologramPose, source: SourceState,
                            beam: BeamGeometry) -> float:
    """Closed-form coincidence probability for dislocations at ``pose_a``/``pose_b``."""
    ra, rb, w2 = pose_a.r, pose_b.r, beam.omega ** 2
    num = (4 * ra * ra * rb * rb
           + 4 * ra * rb * w2 * math.cos(-pose_a.theta + pose_b.theta + source.delta)
           + w2 * w2)
    return source.alpha_sq * num / ((2 * ra * ra + w2) * (2 * rb * rb + w2))


def source_amplitudes(source: SourceState) -> dict[tuple[int, int], complex]:
    """Truncated pair state ``{(m_A, m_B): amplitude}``.

    The ``|1>|-1>`` term carries amplitude ``alpha`` and ``|0>|0>`` carries
    ``alpha * exp(-i delta)``; with this phase convention the maximum of the
    coincidence probability sits at ``theta_A = theta_B + delta``.
    """
    alpha = math.sqrt(source.alpha_sq)
    return {(1, -1): complex(alpha), (0, 0): alpha * complex(math.cos(source.delta),
                                                             -math.sin(source.delta))}


def pair_projection(bra_a: LgKet, bra_b: LgKet, state: Mapping[tuple[int, int], complex]) -> complex:
    """``(<a| ⊗ <b|) |state>`` for a two-photon state given as a sparse map."""
    return sum((bra_a[ma].conjugate() * bra_b[mb].conjugate() * c
                for (ma, mb), c in state.items()), 0j)


def coincidence_probability_oracle(pose_a: HologramPose, pose_b: HologramPose,
                                   source: SourceState, beam: BeamGeometry) -> float:
    """Same quantity as :func:`coincidence_probability`, by explicit projection
    of the pair state onto the two measurement basis kets."""
    amp = pair_projection(basis_minus(pose_a, beam), basis_plus(pose_b, beam),
                          source_amplitudes(source))
    return abs(amp) ** 2


def extremum_poses(pose_b: HologramPose, source: SourceState,
                   beam: BeamGeometry) -> tuple[HologramPose, HologramPose]:
    """Poses of hologram A giving the maximum and the zero of the coincidence
    probability, as ``(max_pose, min_pose)``."""
    if pose_b.r == 0.0:
        raise DegenerateInputError("pose_b.r = 0: the minimum recedes to infinity")
    phi = pose_b.theta + source.delta
    return (HologramPose(pose_b.r, phi),
            HologramPose(beam.omega ** 2 / (2 * pose_b.r), math.pi + phi))


def min_max_distance(r_b: float, beam: BeamGeometry) -> float:
    """Distance between the maximum and the minimum, ``r_B + omega^2 / (2 r_B)``."""
    if not r_b > 0.0:
        raise DegenerateInputError(f"r_B must be > 0, got {r_b!r}")
    return r_b + beam.omega ** 2 / (2.0 * r_b)


def efficiency(profile: EfficiencyProfile, r):
    """Diffraction efficiency at dislocation-to-axis distance ``r`` (scalar or array)."""
    r_arr = np.asarray(r, dtype=np.float64)
    if np.any(r_arr < 0.0):
        raise ValidationError("r", "distance must be >= 0")
    if profile.tabulated:
        out = np.interp(r_arr, profile.table_r, profile.table_eta)
    else:
        out = profile.eta0 * np.maximum(0.0, 1.0 - (r_arr / profile.r_cut) ** profile.power)
    return float(out) if np.ndim(out) == 0 else out


def expected_rate(config: ExperimentConfig, stage_xy) -> float:
    """Coincidence rate (cps) with hologram A's dislocation at ``stage_xy``.

    ``peak_rate`` is the rate at the probability maximum with unit efficiency.
    """
    pose_a = config.pose_a(stage_xy)
    p = coincidence_probability(pose_a, config.pose_b, config.source, config.beam)
    return (config.peak_rate * efficiency(config.profile, pose_a.r) * p / config.source.alpha_sq
            + config.background_rate)


def analytic_map(config: ExperimentConfig, grid: ScanGrid, backend: str | None = None) -> np.ndarray:
    """Noiseless rate map (cps), shape ``(ny, nx)``."""
    xs, ys = grid.mesh()
    return kernels.rate_points(xs, ys, config.axis_xy, config.pose_b.r, config.theta_sum,
                               config.beam.omega, config.profile.kernel_args(),
                               config.peak_rate, config.background_rate, backend=backend)


def simulate_scan(config: ExperimentConfig, grid: ScanGrid, dwell: float = DEFAULT_DWELL,
                  backend: str | None = None) -> ScanMap:
    """Poisson-sampled scan; point ``i`` draws from stream ``i`` of ``config.seed``."""
    if not dwell > 0.0:
        raise ValidationError("dwell", f"must be > 0, got {dwell!r}")
    means = analytic_map(config, grid, backend=backend) * dwell
    counts = kernels.poisson_counts(means, config.seed, backend=backend)
    return ScanMap(grid, dwell, counts, {"seed": config.seed})


def noiseless_scan(config: ExperimentConfig, grid: ScanGrid, dwell: float = 1e6,
                   backend: str | None = None) -> ScanMap:
    """Expected counts rounded to integers; the long default dwell makes the
    rounding negligible, so this stands in for an infinite-dwell scan."""
    counts = np.rint(analytic_map(config, grid, backend=backend) * dwell)
    return ScanMap(grid, dwell, counts, {"noiseless": True})
