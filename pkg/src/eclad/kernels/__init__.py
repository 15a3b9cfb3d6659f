"""Low-level array kernels with selectable backends.

``numpy_impl`` is the portable reference; ``numba_impl`` holds jitted twins
with identical signatures. The names re-exported here are bound once at
import time according to :data:`eclad.backend.ACTIVE_BACKEND`. Both
implementation modules stay importable directly for cross-checking and
benchmarks.
"""

from __future__ import annotations

from eclad.backend import ACTIVE_BACKEND

from . import numpy_impl

if ACTIVE_BACKEND == "numba":
    from . import numba_impl as _impl
else:
    _impl = numpy_impl

resize_nearest = _impl.resize_nearest
resize_bilinear = _impl.resize_bilinear
resize_bicubic = _impl.resize_bicubic
conv2d_fwd = _impl.conv2d_fwd
conv2d_bwd_params = _impl.conv2d_bwd_params
maxpool2_fwd = _impl.maxpool2_fwd
maxpool2_bwd = _impl.maxpool2_bwd
edt_sq = _impl.edt_sq
kmeans_assign = _impl.kmeans_assign

__all__ = [
    "ACTIVE_BACKEND",
    "numpy_impl",
    "resize_nearest",
    "resize_bilinear",
    "resize_bicubic",
    "conv2d_fwd",
    "conv2d_bwd_params",
    "maxpool2_fwd",
    "maxpool2_bwd",
    "edt_sq",
    "kmeans_assign",
]
