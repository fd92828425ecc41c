"""Backend selection for the compiled kernels.

The numba path is used when numba imports cleanly and ``LGAXIS_NUMBA`` is not
set to a false-ish value (``0``, ``false``, ``no``, ``off``).  Every kernel in
:mod:`lgaxis.kernels` also has a pure-numpy implementation that produces the
same numbers.
"""
from __future__ import annotations

import os

# TBB in common distro images is too old for numba and warns on first use.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_FALSE = {"0", "false", "no", "off"}

USE_NUMBA = HAVE_NUMBA and os.environ.get("LGAXIS_NUMBA", "1").strip().lower() not in _FALSE


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda fn: fn


prange = numba.prange if HAVE_NUMBA else range


def resolve_backend(backend: str | None) -> str:
    """Map ``None`` to the process default and validate explicit choices."""
    if backend is None:
        return "numba" if USE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}; expected 'numba' or 'numpy'")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return backend
