"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

Public entry points dispatch on ``backend`` (``"numba"``, ``"numpy"`` or
``None`` for the process default, see :mod:`lgaxis._accel`).

Random numbers come from a counter-based generator: draw ``k`` of stream ``s``
under ``seed`` is a pure function of ``(seed, s, k)`` built from the
splitmix64 finaliser.  Nothing depends on evaluation order, so grid points can
be processed in any order or in parallel and still give identical counts.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import njit, prange, resolve_backend

MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

# Poisson means below this use sequential inversion, above it PTRS.
INVERSION_LIMIT = 30.0
# Inversion gives up past this many terms; P(X > 200 | mean < 30) is ~1e-80.
_INVERSION_CAP = 200

# Efficiency profile kinds understood by the kernels.
PROFILE_POWER = 0
PROFILE_TABLE = 1


def seed_to_u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & MASK64)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def _stream_key(seed, stream):
    return _mix64(_mix64(seed + _GOLDEN) + stream * _GOLDEN)


@njit(cache=True)
def _uniform(key, k):
    z = _mix64(key + (k + _ONE) * _GOLDEN)
    return float(z >> _S11) * _INV53


@njit(cache=True)
def _poisson_one(lam, key):
    if not lam > 0.0:
        return 0
    if lam < INVERSION_LIMIT:
        u = _uniform(key, np.uint64(0))
        k = 0
        p = math.exp(-lam)
        cdf = p
        while u > cdf and k < _INVERSION_CAP:
            k += 1
            p = p * lam / k
            cdf += p
        return k
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    j = np.uint64(0)
    while True:
        u = _uniform(key, j) - 0.5
        v = _uniform(key, j + _ONE)
        j += np.uint64(2)
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return int(k)
        if k < 0.0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= -lam + k * loglam - math.lgamma(k + 1.0)):
            return int(k)


@njit(cache=True, parallel=True)
def _poisson_numba(means, seed, streams):
    out = np.empty(means.size, dtype=np.int64)
    for i in prange(means.size):
        out[i] = _poisson_one(means[i], _stream_key(seed, np.uint64(streams[i])))
    return out


@njit(cache=True)
def _uniforms_numba(seed, stream, n):
    key = _stream_key(seed, np.uint64(stream))
    out = np.empty(n)
    for k in range(n):
        out[k] = _uniform(key, np.uint64(k))
    return out


@njit(cache=True)
def _eta_one(r, kind, eta0, r_cut, power, tab_r, tab_eta):
    if kind == PROFILE_POWER:
        val = 1.0 - (r / r_cut) ** power
        if val < 0.0:
            val = 0.0
        return eta0 * val
    n = tab_r.size
    if r <= tab_r[0]:
        return tab_eta[0]
    if r >= tab_r[n - 1]:
        return tab_eta[n - 1]
    hi = np.searchsorted(tab_r, r, side="right")
    lo = hi - 1
    t = (r - tab_r[lo]) / (tab_r[hi] - tab_r[lo])
    return tab_eta[lo] + t * (tab_eta[hi] - tab_eta[lo])


@njit(cache=True)
def _pnorm_one(dx, dy, r_b, cos_s, sin_s, w2):
    # Coincidence probability divided by |alpha|^2; r_A*cos(theta_sum - theta_A)
    # is written as dx*cos_s + dy*sin_s to avoid atan2.
    ra2 = dx * dx + dy * dy
    num = 4.0 * ra2 * r_b * r_b + 4.0 * r_b * w2 * (dx * cos_s + dy * sin_s) + w2 * w2
    return num / ((2.0 * ra2 + w2) * (2.0 * r_b * r_b + w2))


@njit(cache=True, parallel=True)
def _rates_numba(xs, ys, ax, ay, r_b, theta_sum, omega, kind, eta0, r_cut, power,
                 tab_r, tab_eta, peak, background):
    out = np.empty(xs.size)
    cos_s = math.cos(theta_sum)
    sin_s = math.sin(theta_sum)
    w2 = omega * omega
    for i in prange(xs.size):
        dx = xs[i] - ax
        dy = ys[i] - ay
        eta = _eta_one(math.sqrt(dx * dx + dy * dy), kind, eta0, r_cut, power, tab_r, tab_eta)
        out[i] = peak * eta * _pnorm_one(dx, dy, r_b, cos_s, sin_s, w2) + background
    return out


@njit(cache=True, parallel=True)
def _fit_numba(xs, ys, counts, c_ax, c_ay, c_rb, c_omega, theta_sum, kind, eta0, r_cut,
               power, tab_r, tab_eta):
    ncand = c_rb.size
    resid = np.empty(ncand)
    scale = np.empty(ncand)
    cos_s = math.cos(theta_sum)
    sin_s = math.sin(theta_sum)
    for j in prange(ncand):
        w2 = c_omega[j] * c_omega[j]
        swym = 0.0
        swmm = 0.0
        swyy = 0.0
        for i in range(xs.size):
            dx = xs[i] - c_ax[j]
            dy = ys[i] - c_ay[j]
            eta = _eta_one(math.sqrt(dx * dx + dy * dy), kind, eta0, r_cut, power, tab_r, tab_eta)
            m = eta * _pnorm_one(dx, dy, c_rb[j], cos_s, sin_s, w2)
            c = counts[i]
            w = 1.0 / max(c, 1.0)
            swym += w * c * m
            swmm += w * m * m
            swyy += w * c * c
        kappa = swym / swmm if swmm > 0.0 else 0.0
        scale[j] = kappa
        # sum w (c - kappa m)^2 expanded; clipped against round-off.
        resid[j] = max(swyy - kappa * swym, 0.0)
    return resid, scale


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------


def _mix64_np(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _stream_keys_np(seed, streams):
    streams = np.asarray(streams, dtype=np.uint64)
    base = _mix64_np(np.asarray([seed], dtype=np.uint64) + _GOLDEN)
    with np.errstate(over="ignore"):
        return _mix64_np(base + streams * _GOLDEN)


def _uniforms_np(keys, k):
    with np.errstate(over="ignore"):
        z = _mix64_np(keys + (np.uint64(k) + _ONE) * _GOLDEN)
    return (z >> _S11).astype(np.float64) * _INV53


_lgamma = np.frompyfunc(math.lgamma, 1, 1)


def _poisson_np(means, seed, streams):
    means = np.asarray(means, dtype=np.float64).ravel()
    keys = _stream_keys_np(seed, np.asarray(streams).ravel())
    out = np.zeros(means.size, dtype=np.int64)

    small = np.flatnonzero((means > 0.0) & (means < INVERSION_LIMIT))
    if small.size:
        lam = means[small]
        u = _uniforms_np(keys[small], 0)
        p = np.exp(-lam)
        cdf = p.copy()
        k = np.zeros(small.size, dtype=np.int64)
        active = u > cdf
        n = 0
        while active.any() and n < _INVERSION_CAP:
            n += 1
            idx = np.flatnonzero(active)
            k[idx] = n
            p[idx] = p[idx] * lam[idx] / n
            cdf[idx] += p[idx]
            active[idx] = u[idx] > cdf[idx]
        out[small] = k

    big = np.flatnonzero(means >= INVERSION_LIMIT)
    if big.size:
        lam = means[big]
        slam = np.sqrt(lam)
        loglam = np.log(lam)
        b = 0.931 + 2.53 * slam
        a = -0.059 + 0.02483 * b
        invalpha = 1.1239 + 1.1328 / (b - 3.4)
        vr = 0.9277 - 3.6224 / (b - 2.0)
        pending = np.arange(big.size)
        j = 0
        while pending.size:
            kp = keys[big[pending]]
            u = _uniforms_np(kp, j) - 0.5
            v = _uniforms_np(kp, j + 1)
            j += 2
            us = 0.5 - np.abs(u)
            a_, b_, lam_ = a[pending], b[pending], lam[pending]
            k = np.floor((2.0 * a_ / us + b_) * u + lam_ + 0.43)
            fast = (us >= 0.07) & (v <= vr[pending])
            reject = ~fast & ((k < 0.0) | ((us < 0.013) & (v > us)))
            slow = ~fast & ~reject
            accept = fast.copy()
            if slow.any():
                s = np.flatnonzero(slow)
                lhs = (np.log(v[s]) + np.log(invalpha[pending[s]])
                       - np.log(a_[s] / (us[s] * us[s]) + b_[s]))
                rhs = (-lam_[s] + k[s] * loglam[pending[s]]
                       - _lgamma(k[s] + 1.0).astype(np.float64))
                accept[s] = lhs <= rhs
            out[big[pending[accept]]] = k[accept].astype(np.int64)
            pending = pending[~accept]
    return out


def _eta_np(r, kind, eta0, r_cut, power, tab_r, tab_eta):
    if kind == PROFILE_POWER:
        return eta0 * np.maximum(0.0, 1.0 - (r / r_cut) ** power)
    return np.interp(r, tab_r, tab_eta)


def _pnorm_np(dx, dy, r_b, theta_sum, omega):
    w2 = omega * omega
    ra2 = dx * dx + dy * dy
    proj = dx * np.cos(theta_sum) + dy * np.sin(theta_sum)
    num = 4.0 * ra2 * r_b * r_b + 4.0 * r_b * w2 * proj + w2 * w2
    return num / ((2.0 * ra2 + w2) * (2.0 * r_b * r_b + w2))


def _rates_np(xs, ys, ax, ay, r_b, theta_sum, omega, kind, eta0, r_cut, power,
              tab_r, tab_eta, peak, background):
    dx = xs - ax
    dy = ys - ay
    eta = _eta_np(np.sqrt(dx * dx + dy * dy), kind, eta0, r_cut, power, tab_r, tab_eta)
    return peak * eta * _pnorm_np(dx, dy, r_b, theta_sum, omega) + background


def _fit_np(xs, ys, counts, c_ax, c_ay, c_rb, c_omega, theta_sum, kind, eta0, r_cut,
            power, tab_r, tab_eta):
    dx = xs[None, :] - c_ax[:, None]
    dy = ys[None, :] - c_ay[:, None]
    eta = _eta_np(np.sqrt(dx * dx + dy * dy), kind, eta0, r_cut, power, tab_r, tab_eta)
    m = eta * _pnorm_np(dx, dy, c_rb[:, None], theta_sum, c_omega[:, None])
    w = 1.0 / np.maximum(counts, 1.0)
    swym = (w * counts * m).sum(axis=1)
    swmm = (w * m * m).sum(axis=1)
    swyy = (w * counts * counts).sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa = np.where(swmm > 0.0, swym / swmm, 0.0)
    return np.maximum(swyy - kappa * swym, 0.0), kappa


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


def _profile_args(profile_args):
    kind, eta0, r_cut, power, tab_r, tab_eta = profile_args
    return (int(kind), float(eta0), float(r_cut), float(power),
            np.ascontiguousarray(tab_r, dtype=np.float64),
            np.ascontiguousarray(tab_eta, dtype=np.float64))


def poisson_counts(means, seed: int, streams=None, backend: str | None = None) -> np.ndarray:
    """Poisson draws with per-element counter-based streams.

    ``streams`` defaults to ``arange(means.size)``; element ``i`` uses stream
    ``streams[i]`` under ``seed``.  Output has the shape of ``means``.
    """
    means = np.asarray(means, dtype=np.float64)
    if np.any(means < 0.0) or not np.all(np.isfinite(means)):
        raise ValueError("Poisson means must be finite and non-negative")
    shape = means.shape
    flat = np.ascontiguousarray(means.ravel())
    if streams is None:
        streams = np.arange(flat.size, dtype=np.uint64)
    streams = np.ascontiguousarray(np.asarray(streams).ravel().astype(np.uint64))
    if streams.size != flat.size:
        raise ValueError("streams must match means in size")
    if resolve_backend(backend) == "numba":
        out = _poisson_numba(flat, seed_to_u64(seed), streams)
    else:
        out = _poisson_np(flat, seed_to_u64(seed), streams)
    return out.reshape(shape)


def counter_uniforms(seed: int, stream: int, n: int, backend: str | None = None) -> np.ndarray:
    """First ``n`` uniforms in [0, 1) of one stream."""
    if resolve_backend(backend) == "numba":
        return _uniforms_numba(seed_to_u64(seed), int(stream) & MASK64, int(n))
    keys = _stream_keys_np(seed_to_u64(seed), [int(stream) & MASK64])
    return np.array([_uniforms_np(keys, k)[0] for k in range(int(n))])


def rate_points(xs, ys, axis_xy, r_b, theta_sum, omega, profile_args, peak, background,
                backend: str | None = None) -> np.ndarray:
    """Expected coincidence rate at stage points ``(xs, ys)``.

    ``theta_sum`` is theta_B + delta, the direction of the rate maximum seen
    from the axis.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    shape = xs.shape
    args = (xs.ravel(), ys.ravel(), float(axis_xy[0]), float(axis_xy[1]), float(r_b),
            float(theta_sum), float(omega), *_profile_args(profile_args), float(peak),
            float(background))
    if resolve_backend(backend) == "numba":
        out = _rates_numba(*args)
    else:
        out = _rates_np(*args)
    return out.reshape(shape)


def fit_residuals(xs, ys, counts, axes_xy, r_b, omega, theta_sum, profile_args,
                  backend: str | None = None):
    """Weighted residual and best scale for each candidate geometry.

    For candidate ``j`` the model is ``kappa * eta(r_A) * P/|alpha|^2`` and the
    residual is ``sum (c - kappa m)^2 / max(c, 1)`` at the optimal ``kappa``.
    """
    xs = np.ascontiguousarray(np.ravel(xs), dtype=np.float64)
    ys = np.ascontiguousarray(np.ravel(ys), dtype=np.float64)
    counts = np.ascontiguousarray(np.ravel(counts), dtype=np.float64)
    axes_xy = np.atleast_2d(np.asarray(axes_xy, dtype=np.float64))
    r_b = np.ascontiguousarray(np.atleast_1d(r_b), dtype=np.float64)
    omega = np.ascontiguousarray(np.atleast_1d(omega), dtype=np.float64)
    args = (xs, ys, counts, np.ascontiguousarray(axes_xy[:, 0]),
            np.ascontiguousarray(axes_xy[:, 1]), r_b, omega, float(theta_sum),
            *_profile_args(profile_args))
    if resolve_backend(backend) == "numba":
        return _fit_numba(*args)
    return _fit_np(*args)
