"""Numba availability switch.

Set ``FLUOROSIM_DISABLE_NUMBA=1`` to force the pure-numpy kernels.
"""

import os

_FLAG = os.environ.get("FLUOROSIM_DISABLE_NUMBA", "").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _numba = None

USE_NUMBA = _numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` with numba when available, else return it unchanged."""
    if _numba is None:
        return fn
    return _numba.njit(cache=True, nogil=True)(fn)
