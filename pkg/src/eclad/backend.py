"""Kernel backend selection.

The numeric hot loops (resizing, convolution, distance transforms, cluster
assignment) exist twice: a numba-jitted implementation and a pure-numpy
fallback. The active backend is chosen once at import time from the
``ECLAD_BACKEND`` environment variable:

    ECLAD_BACKEND=numba   force the jitted kernels (error if numba missing)
    ECLAD_BACKEND=numpy   force the pure-numpy fallback
    unset / "auto"        numba when importable, else numpy

Both backends produce results that agree to floating-point noise; each one
is individually deterministic.
"""

from __future__ import annotations

import os

_ENV_VAR = "ECLAD_BACKEND"
_VALID = ("auto", "numba", "numpy")


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def requested_backend() -> str:
    value = os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto"
    if value not in _VALID:
        raise ValueError(
            f"{_ENV_VAR} must be one of {_VALID}, got {value!r}"
        )
    return value


def select_backend() -> str:
    """Resolve the backend name actually used ('numba' or 'numpy')."""
    req = requested_backend()
    if req == "numpy":
        return "numpy"
    if req == "numba":
        if not _numba_available():
            raise RuntimeError(
                f"{_ENV_VAR}=numba but numba is not importable"
            )
        return "numba"
    return "numba" if _numba_available() else "numpy"


ACTIVE_BACKEND = select_backend()
