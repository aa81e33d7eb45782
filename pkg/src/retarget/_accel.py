"""Numba switch.

Set ``RETARGET_NO_NUMBA=1`` to force the pure-numpy kernels (useful for
debugging and for the kernel benchmark). If numba cannot be imported the
numpy path is used automatically.
"""
import os

_FLAG = os.environ.get("RETARGET_NO_NUMBA", "").strip().lower()

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` with numba when available, else return it untouched."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
