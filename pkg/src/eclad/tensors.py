"""Dense tensor containers and the numerical operations built on them.

Values are plain numpy arrays with fixed conventions rather than wrapper
classes:

* ``Tensor3``: float array of shape (height, width, channels), row-major.
* ``Mask2``: bool array of shape (height, width).
* ``Field2``: non-negative float64 array of shape (height, width).

The public operations are ``upscale`` (nearest / bilinear / bicubic with
half-pixel-center sampling), ``concat_channels``, and ``edt`` (exact
Euclidean distance to the nearest true pixel, with a finite cap when the
seed mask is empty).
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import kernels

MODES = ("nearest", "bilinear", "bicubic")

_RESIZE = {
    "nearest": kernels.resize_nearest,
    "bilinear": kernels.resize_bilinear,
    "bicubic": kernels.resize_bicubic,
}


def check_tensor3(t: np.ndarray) -> np.ndarray:
    if not isinstance(t, np.ndarray) or t.ndim != 3:
        raise ValueError("expected an array of shape (height, width, channels)")
    if t.size == 0:
        raise ValueError("empty tensor")
    return t


def check_mask2(m: np.ndarray) -> np.ndarray:
    if not isinstance(m, np.ndarray) or m.ndim != 2 or m.dtype != np.bool_:
        raise ValueError("expected a bool array of shape (height, width)")
    return m


def edt_cap(height: int, width: int) -> float:
    """Distance assigned everywhere when the seed mask is empty."""
    return math.sqrt(height * height + width * width)


def upscale(src: np.ndarray, target_h: int, target_w: int, mode: str = "bilinear") -> np.ndarray:
    """Resample ``src`` to (target_h, target_w) preserving channel count.

    Sampling uses the half-pixel-center mapping
    ``src_coord = (dst + 0.5) * (src_dim / dst_dim) - 0.5`` clamped to the
    source extent, so identity targets reproduce the input exactly.
    Bicubic uses the Keys kernel with a = -0.5.
    """
    check_tensor3(src)
    if target_h < 1 or target_w < 1:
        raise ValueError("target dims must be >= 1")
    if mode not in _RESIZE:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    src = np.ascontiguousarray(src)
    return _RESIZE[mode](src, target_h, target_w)


def concat_channels(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate tensors along the channel axis, preserving list order."""
    if len(parts) == 0:
        raise ValueError("concat_channels needs at least one tensor")
    h, w = parts[0].shape[:2]
    for p in parts:
        check_tensor3(p)
        if p.shape[:2] != (h, w):
            raise ValueError(f"spatial dims differ: {p.shape[:2]} vs {(h, w)}")
    if len(parts) == 1:
        return parts[0]
    return np.concatenate(parts, axis=2)


def edt(seeds: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from every pixel to the nearest true pixel.

    Empty seed masks yield the cap sqrt(h^2 + w^2) everywhere, keeping
    downstream distance sums finite and bounded.
    """
    check_mask2(seeds)
    h, w = seeds.shape
    if not seeds.any():
        return np.full((h, w), edt_cap(h, w), np.float64)
    return np.sqrt(kernels.edt_sq(np.ascontiguousarray(seeds)))
