"""Backend selection for the hot stepping kernels.

Set ``HJLAB_NO_NUMBA=1`` to force the pure-numpy path. When numba is not
importable the numpy path is used silently.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("HJLAB_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False
    _numba_njit = None


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def deco(fn):
        return fn

    return deco


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
