"""CHSH correlations and S-values, from counts or from the coincidence model.

Each analyser setting is a hologram azimuth; the orthogonal channel of setting
``theta`` is ``theta + pi`` at the same radius.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ValidationError, ZeroTotalError
from .forward import coincidence_probability
from .lg import BeamGeometry, HologramPose, SourceState, wrap_angle


@dataclass(frozen=True)
class ChshSettings:
    theta_a: float
    theta_a_prime: float
    theta_b: float
    theta_b_prime: float

    def __post_init__(self):
        for name in ("theta_a", "theta_a_prime", "theta_b", "theta_b_prime"):
            object.__setattr__(self, name, wrap_angle(getattr(self, name)))

    def pairs(self) -> tuple[tuple[float, float], ...]:
        """(theta_A, theta_B) for the four terms, in the order
        (a, b), (a, b'), (a', b), (a', b')."""
        a, ap, b, bp = self.theta_a, self.theta_a_prime, self.theta_b, self.theta_b_prime
        return (a, b), (a, bp), (ap, b), (ap, bp)


CANONICAL = ChshSettings(-math.pi / 4, math.pi / 4, -math.pi / 2, 0.0)


@dataclass(frozen=True)
class CountQuad:
    """Coincidences for one setting pair and its three perpendicular partners."""

    theta_a: float
    theta_b: float
    c: int
    c_ab_perp: int
    c_a_perp_b: int
    c_perp_perp: int
    accumulation: float = 1.0
    # Reserved for singles-compensated analyses; not used in any computation.
    singles_a: float | None = None
    singles_b: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta_a", wrap_angle(self.theta_a))
        object.__setattr__(self, "theta_b", wrap_angle(self.theta_b))
        for name in ("c", "c_ab_perp", "c_a_perp_b", "c_perp_perp"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValidationError(f"CountQuad.{name}", f"must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if not self.accumulation > 0.0:
            raise ValidationError("CountQuad.accumulation", f"must be > 0, got {self.accumulation!r}")
        object.__setattr__(self, "accumulation", float(self.accumulation))

    @property
    def total(self) -> int:
        return self.c + self.c_ab_perp + self.c_a_perp_b + self.c_perp_perp


@dataclass(frozen=True)
class CorrelationSet:
    """E values in the order of :meth:`ChshSettings.pairs`."""

    e_ab: float
    e_ab_prime: float
    e_a_prime_b: float
    e_a_prime_b_prime: float

    def __post_init__(self):
        for name in ("e_ab", "e_ab_prime", "e_a_prime_b", "e_a_prime_b_prime"):
            if not -1.0 - 1e-12 <= getattr(self, name) <= 1.0 + 1e-12:
                raise ValidationError(f"CorrelationSet.{name}", "must lie in [-1, 1]")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.e_ab, self.e_ab_prime, self.e_a_prime_b, self.e_a_prime_b_prime


def perp(theta: float) -> float:
    return wrap_angle(theta + math.pi)


def correlation_from_counts(quad: CountQuad) -> float:
    total = quad.total
    if total == 0:
        raise ZeroTotalError(f"all four counts are zero at ({quad.theta_a:.4g}, {quad.theta_b:.4g})")
    return (quad.c + quad.c_perp_perp - quad.c_a_perp_b - quad.c_ab_perp) / total


def s_value(correlations: CorrelationSet) -> float:
    """S = E(a,b) - E(a',b) + E(a,b') + E(a',b')."""
    e = correlations
    return e.e_ab - e.e_a_prime_b + e.e_ab_prime + e.e_a_prime_b_prime


def _same_angle(x: float, y: float) -> bool:
    return abs(wrap_angle(x - y)) < 1e-9


def infer_settings(quads: Sequence[CountQuad]) -> ChshSettings:
    """Unprimed angles are the first seen on each side, in file order."""
    a_vals, b_vals = [], []
    for q in quads:
        if not any(_same_angle(q.theta_a, v) for v in a_vals):
            a_vals.append(q.theta_a)
        if not any(_same_angle(q.theta_b, v) for v in b_vals):
            b_vals.append(q.theta_b)
    if len(a_vals) != 2 or len(b_vals) != 2:
        raise ValidationError("quads", "need exactly two distinct angles per side")
    return ChshSettings(a_vals[0], a_vals[1], b_vals[0], b_vals[1])


def correlations_from_quads(quads: Sequence[CountQuad],
                            settings: ChshSettings | None = None) -> CorrelationSet:
    settings = settings or infer_settings(quads)
    es = []
    for ta, tb in settings.pairs():
        match = [q for q in quads if _same_angle(q.theta_a, ta) and _same_angle(q.theta_b, tb)]
        if len(match) != 1:
            raise ValidationError("quads", f"expected one quad at ({ta:.4g}, {tb:.4g}), found {len(match)}")
        es.append(correlation_from_counts(match[0]))
    return CorrelationSet(*es)


def angle_coincidence_probability(theta_a: float, theta_b: float, r: float, beam: BeamGeometry,
                                  source: SourceState) -> float:
    """Coincidence probability with both dislocations at radius ``r``.

    Same phase convention as :func:`lgaxis.forward.coincidence_probability`,
    so the two agree exactly for ``r_A = r_B = r``.
    """
    if r < 0:
        raise ValidationError("r", "must be >= 0")
    w2 = beam.omega ** 2
    r2 = r * r
    return (source.alpha_sq * (4 * r2 * r2 + w2 * w2 + 4 * r2 * w2 * math.cos(source.delta - theta_a + theta_b))
            / (2 * r2 + w2) ** 2)


def visibility(r: float, beam: BeamGeometry) -> float:
    """Fringe visibility ``4 r^2 w^2 / (4 r^4 + w^4)``."""
    w2 = beam.omega ** 2
    return 4 * r * r * w2 / (4 * r ** 4 + w2 * w2)


def predicted_correlations(settings: ChshSettings, r: float, beam: BeamGeometry,
                           source: SourceState) -> CorrelationSet:
    v = visibility(r, beam)
    return CorrelationSet(*(v * math.cos(source.delta - ta + tb) for ta, tb in settings.pairs()))


def predict_s(settings: ChshSettings, r: float, beam: BeamGeometry,
              source: SourceState | None = None) -> float:
    """Model S-value; ``source`` defaults to delta = 0."""
    if not r > 0:
        raise ValidationError("r", "must be > 0")
    return s_value(predicted_correlations(settings, r, beam, source or SourceState()))


def optimal_radius(beam: BeamGeometry) -> float:
    """Radius of unit visibility, ``omega / sqrt(2)``."""
    return beam.omega / math.sqrt(2.0)


def _channel_angles(ta, tb):
    # (a, b), (a, b_perp), (a_perp, b), (a_perp, b_perp)
    return (ta, tb), (ta, perp(tb)), (perp(ta), tb), (perp(ta), perp(tb))


def simulate_chsh_counts(settings: ChshSettings, r: float, beam: BeamGeometry, source: SourceState,
                         peak_rate: float, accumulation: float, seed: int,
                         backend: str | None = None) -> tuple[CountQuad, ...]:
    """Poisson count quads for the four setting pairs.

    Channel ``j`` of pair ``q`` draws from stream ``4 q + j`` with mean
    ``peak_rate * accumulation * P / |alpha|^2``.
    """
    if not accumulation > 0:
        raise ValidationError("accumulation", "must be > 0")
    if not peak_rate > 0:
        raise ValidationError("peak_rate", "must be > 0")
    means = []
    for ta, tb in settings.pairs():
        for ca, cb in _channel_angles(ta, tb):
            p = coincidence_probability(HologramPose(r, ca), HologramPose(r, cb), source, beam)
            means.append(peak_rate * accumulation * p / source.alpha_sq)
    counts = kernels.poisson_counts(np.array(means), seed, backend=backend).reshape(4, 4)
    return tuple(CountQuad(ta, tb, *(int(v) for v in row), accumulation=accumulation)
                 for (ta, tb), row in zip(settings.pairs(), counts))


def s_from_quads(quads: Sequence[CountQuad], settings: ChshSettings | None = None) -> float:
    return s_value(correlations_from_quads(quads, settings))
