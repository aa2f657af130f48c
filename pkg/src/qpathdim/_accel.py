"""Kernel backend selection.

Hot loops exist in two flavours: an ``@njit`` scalar-loop version and a
vectorised numpy version. ``QPATHDIM_NUMBA=0`` (or numba missing) selects the
numpy flavour everywhere. Both flavours stay importable so they can be
compared against each other.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("QPATHDIM_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)

NJIT_KWARGS = {"nogil": True, "cache": True, "fastmath": False}


def njit(func):
    """Compile ``func`` with numba when available; return it untouched otherwise."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(**NJIT_KWARGS)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
