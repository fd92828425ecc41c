"""Single-photon LG angular-momentum kets and hologram measurement bases.

Only the azimuthal index ``m`` is tracked (radial index ignored) and the mode
space is truncated to ``|m| <= 2``.  Kets are sparse ``{m: amplitude}`` maps.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from .errors import ValidationError

MAX_M = 2
NORM_TOL = 1e-12


def wrap_angle(theta: float) -> float:
    """Map ``theta`` into (-pi, pi]."""
    theta = float(theta)
    wrapped = math.pi - math.fmod(math.pi - theta, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    elif wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class HologramPose:
    """Polar position of a hologram dislocation relative to the optical axis.

    ``r`` in micrometers, ``theta`` in radians (normalised into (-pi, pi]).
    """

    r: float
    theta: float = 0.0

    def __post_init__(self):
        r = float(self.r)
        if not (r >= 0.0 and math.isfinite(r)):
            raise ValidationError("HologramPose.r", f"must be finite and >= 0, got {self.r!r}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @classmethod
    def from_xy(cls, dx: float, dy: float) -> "HologramPose":
        return cls(math.hypot(dx, dy), math.atan2(dy, dx) if (dx or dy) else 0.0)

    @property
    def xy(self) -> tuple[float, float]:
        return self.r * math.cos(self.theta), self.r * math.sin(self.theta)


@dataclass(frozen=True)
class BeamGeometry:
    """Beam radius ``omega`` in micrometers."""

    omega: float

    def __post_init__(self):
        omega = float(self.omega)
        if not (omega > 0.0 and math.isfinite(omega)):
            raise ValidationError("BeamGeometry.omega", f"must be > 0, got {self.omega!r}")
        object.__setattr__(self, "omega", omega)


@dataclass(frozen=True)
class SourceState:
    """Truncated two-photon source: equal weights ``alpha_sq`` on the
    ``|1>_A|-1>_B`` and ``|0>_A|0>_B`` terms, relative phase ``delta``.
    """

    alpha_sq: float = 0.5
    delta: float = 0.0

    def __post_init__(self):
        a = float(self.alpha_sq)
        if not (0.0 < a <= 0.5):
            raise ValidationError("SourceState.alpha_sq", f"must lie in (0, 0.5], got {self.alpha_sq!r}")
        object.__setattr__(self, "alpha_sq", a)
        object.__setattr__(self, "delta", wrap_angle(self.delta))


@dataclass(frozen=True)
class LgKet:
    """Finite superposition over LG indices, ``{m: complex amplitude}``."""

    amplitudes: Mapping[int, complex] = field(default_factory=dict)

    def __post_init__(self):
        amps = {}
        for m, c in dict(self.amplitudes).items():
            if int(m) != m or abs(int(m)) > MAX_M:
                raise ValidationError("LgKet.amplitudes", f"index {m!r} outside |m| <= {MAX_M}")
            c = complex(c)
            if c != 0:
                amps[int(m)] = c
        if sum(abs(c) ** 2 for c in amps.values()) > 1.0 + NORM_TOL:
            raise ValidationError("LgKet.amplitudes", "squared amplitudes sum above 1")
        object.__setattr__(self, "amplitudes", MappingProxyType(dict(sorted(amps.items()))))

    def __getitem__(self, m: int) -> complex:
        return self.amplitudes.get(m, 0j)

    def __eq__(self, other):
        if not isinstance(other, LgKet):
            return NotImplemented
        return dict(self.amplitudes) == dict(other.amplitudes)

    def __hash__(self):
        return hash(tuple(self.amplitudes.items()))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(self.amplitudes)

    def norm(self) -> float:
        return math.sqrt(sum(abs(c) ** 2 for c in self.amplitudes.values()))


def basis_ket(m: int) -> LgKet:
    """The pure mode ``|m>``."""
    return LgKet({m: 1.0})


def _weights(r: float, omega: float) -> tuple[float, float]:
    # (sqrt(2r^2/(2r^2+w^2)), sqrt(w^2/(2r^2+w^2)))
    two_r2 = 2.0 * r * r
    w2 = omega * omega
    total = two_r2 + w2
    return math.sqrt(two_r2 / total), math.sqrt(w2 / total)


def basis_minus(pose: HologramPose, beam: BeamGeometry) -> LgKet:
    """Measurement basis state of path A (-1st order into the fiber)."""
    a, c = _weights(pose.r, beam.omega)
    return LgKet({0: cmath.exp(-1j * pose.theta) * a, 1: c})


def basis_plus(pose: HologramPose, beam: BeamGeometry) -> LgKet:
    """Measurement basis state of path B (+1st order into the fiber)."""
    a, c = _weights(pose.r, beam.omega)
    return LgKet({0: cmath.exp(1j * pose.theta) * a, -1: c})


def hologram_output_state(pose: HologramPose, beam: BeamGeometry) -> LgKet:
    """State diffracted from a Gaussian input by a dislocation at ``pose``."""
    a, c = _weights(pose.r, beam.omega)
    return LgKet({0: cmath.exp(1j * (pose.theta + math.pi)) * a, 1: c})


def time_reverse(k: LgKet) -> LgKet:
    """Map each amplitude ``c_m`` to ``conj(c_m) * (-1)**m``."""
    return LgKet({m: c.conjugate() * (-1) ** (m % 2) for m, c in k.amplitudes.items()})


def inner_product(a: LgKet, b: LgKet) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    return sum((ca.conjugate() * b[m] for m, ca in a.amplitudes.items()), 0j)


def phase_between(a: LgKet, b: LgKet, tol: float = 1e-10) -> complex | None:
    """Unit phase ``u`` with ``a == u * b`` within ``tol``, else ``None``.

    Kets with different norms are never phase-equivalent.
    """
    if abs(a.norm() - b.norm()) > tol:
        return None
    ov = inner_product(b, a)
    if abs(ov) == 0.0:
        return None if a.norm() > tol else 1 + 0j
    u = ov / abs(ov)
    keys = set(a.amplitudes) | set(b.amplitudes)
    if all(abs(a[m] - u * b[m]) <= tol for m in keys):
        return u
    return None


def equal_up_to_phase(a: LgKet, b: LgKet, tol: float = 1e-10) -> bool:
    return phase_between(a, b, tol) is not None
