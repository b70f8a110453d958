"""Numba switch shared by the hot kernels.

Set ``BDMPQ_DISABLE_NUMBA=1`` before importing :mod:`bdmpq` to run every
kernel through its pure numpy/Python path.  The flag is read once, at import.
"""
from __future__ import annotations

import os

_DISABLED = os.environ.get("BDMPQ_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by BDMPQ_DISABLE_NUMBA")
    import numba as _numba
except ImportError:
    _numba = None

USE_NUMBA = _numba is not None


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, identity decorator otherwise."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if args and callable(args[0]) and len(args) == 1 and not kwargs:
        return args[0]
    return lambda func: func


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n: int | None) -> None:
    if USE_NUMBA and n:
        _numba.set_num_threads(max(1, min(int(n), _numba.config.NUMBA_NUM_THREADS)))
