"""Numba availability and the environment switch that selects kernel paths.

Set ``TREEPLASSO_NUMBA=0`` before import to force the pure-numpy kernels.
"""

import logging
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_OFF = {"0", "false", "no", "off"}

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("TREEPLASSO_NUMBA", "1").strip().lower() not in _OFF

if HAVE_NUMBA:
    logging.getLogger("numba").setLevel(logging.WARNING)


def njit(func):
    """Compile ``func`` in nopython mode when numba is importable, else return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)
