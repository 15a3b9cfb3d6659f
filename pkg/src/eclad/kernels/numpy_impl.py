"""Pure-numpy kernel implementations.

These are the fallback twins of the jitted kernels in ``numba_impl``. Each
function has the same signature and contract as its jitted counterpart.
Interpolation arithmetic runs in float64 internally so that convex weights
cannot push float32 outputs past the source extrema.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


# ---------------------------------------------------------------------------
# resizing (half-pixel-center source mapping, clamped to [0, S-1])


def _source_positions(target: int, source: int) -> np.ndarray:
    pos = (np.arange(target, dtype=np.float64) + 0.5) * (source / target) - 0.5
    np.clip(pos, 0.0, float(source - 1), out=pos)
    return pos


def resize_nearest(src: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    ys = np.floor(_source_positions(target_h, src.shape[0]) + 0.5).astype(np.int64)
    xs = np.floor(_source_positions(target_w, src.shape[1]) + 0.5).astype(np.int64)
    np.clip(ys, 0, src.shape[0] - 1, out=ys)
    np.clip(xs, 0, src.shape[1] - 1, out=xs)
    return np.ascontiguousarray(src[ys][:, xs])


def _linear_axis(src: np.ndarray, target: int, axis: int) -> np.ndarray:
    size = src.shape[axis]
    pos = _source_positions(target, size)
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    i1 = np.minimum(i0 + 1, size - 1)
    lo = np.take(src, i0, axis=axis)
    hi = np.take(src, i1, axis=axis)
    shape = [1] * src.ndim
    shape[axis] = target
    frac = frac.reshape(shape)
    return lo + frac * (hi - lo)


def resize_bilinear(src: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    out = _linear_axis(src.astype(np.float64), target_h, 0)
    out = _linear_axis(out, target_w, 1)
    return out.astype(src.dtype)


def _keys_weight(t: np.ndarray) -> np.ndarray:
    # Catmull-Rom cubic (a = -0.5)
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    tn = t[near]
    out[near] = (1.5 * tn - 2.5) * tn * tn + 1.0
    tf = t[far]
    out[far] = ((-0.5 * tf + 2.5) * tf - 4.0) * tf + 2.0
    return out


def _cubic_axis(src: np.ndarray, target: int, axis: int) -> np.ndarray:
    size = src.shape[axis]
    pos = _source_positions(target, size)
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    shape = [1] * src.ndim
    shape[axis] = target
    acc = np.zeros(src.shape[:axis] + (target,) + src.shape[axis + 1 :], np.float64)
    for tap in range(-1, 3):
        idx = np.clip(i0 + tap, 0, size - 1)
        w = _keys_weight(frac - tap).reshape(shape)
        acc += w * np.take(src, idx, axis=axis)
    return acc


def resize_bicubic(src: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    out = _cubic_axis(src.astype(np.float64), target_h, 0)
    out = _cubic_axis(out, target_w, 1)
    return out.astype(src.dtype)


# ---------------------------------------------------------------------------
# 2-D convolution, zero padding, stride 1, odd kernel


def conv2d_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    kh, kw, cin, cout = w.shape
    h, wd = x.shape[0], x.shape[1]
    xp = np.pad(x, ((kh // 2, kh // 2), (kw // 2, kw // 2), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))  # (h, w, cin, kh, kw)
    cols = win.reshape(h * wd, cin * kh * kw)
    wmat = w.transpose(2, 0, 1, 3).reshape(cin * kh * kw, cout)
    return (cols @ wmat + b).reshape(h, wd, cout)


def conv2d_bwd_params(x: np.ndarray, dy: np.ndarray, kh: int, kw: int) -> np.ndarray:
    h, wd, cin = x.shape
    cout = dy.shape[2]
    xp = np.pad(x, ((kh // 2, kh // 2), (kw // 2, kw // 2), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))
    cols = win.reshape(h * wd, cin * kh * kw)
    dw = cols.T @ dy.reshape(h * wd, cout)
    return dw.reshape(cin, kh, kw, cout).transpose(1, 2, 0, 3).copy()


# ---------------------------------------------------------------------------
# 2x2 max pooling, stride 2; idx stores the in-window argmax (row-major 0..3)


def maxpool2_fwd(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    xr = x.reshape(h2, 2, w2, 2, c).transpose(0, 2, 1, 3, 4).reshape(h2, w2, 4, c)
    idx = xr.argmax(axis=2)
    y = np.take_along_axis(xr, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return y, idx.astype(np.int8)


def maxpool2_bwd(dy: np.ndarray, idx: np.ndarray) -> np.ndarray:
    h2, w2, c = dy.shape
    dxr = np.zeros((h2, w2, 4, c), dy.dtype)
    np.put_along_axis(dxr, idx.astype(np.int64)[:, :, None, :], dy[:, :, None, :], axis=2)
    return (
        dxr.reshape(h2, w2, 2, 2, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(h2 * 2, w2 * 2, c)
    )


# ---------------------------------------------------------------------------
# exact squared Euclidean distance transform (assumes >= 1 seed pixel)


def edt_sq(seeds: np.ndarray) -> np.ndarray:
    h, w = seeds.shape
    unreachable = h + w + 1
    # vertical pass: exact row-distance to the nearest seed in each column
    g = np.where(seeds, 0, unreachable).astype(np.int64)
    for y in range(1, h):
        np.minimum(g[y], g[y - 1] + 1, out=g[y])
    for y in range(h - 2, -1, -1):
        np.minimum(g[y], g[y + 1] + 1, out=g[y])
    # horizontal pass: D(y,x) = min_j g(y,j)^2 + (x-j)^2, exact in int64
    g2 = g * g
    cols = np.arange(w, dtype=np.int64)
    sq_off = (cols[:, None] - cols[None, :]) ** 2  # (x, j)
    out = np.empty((h, w), np.int64)
    step = max(1, (1 << 22) // max(1, w * w))  # bound the (step, w, w) temp
    for y0 in range(0, h, step):
        block = g2[y0 : y0 + step]
        out[y0 : y0 + step] = (block[:, None, :] + sq_off[None, :, :]).min(axis=2)
    return out.astype(np.float64)


# ---------------------------------------------------------------------------
# nearest-centroid assignment (ties -> lowest centroid index)


def kmeans_assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    n = points.shape[0]
    k = centroids.shape[0]
    d = np.empty((n, k), np.float64)
    for j in range(k):
        diff = points - centroids[j]
        d[:, j] = np.einsum("nd,nd->n", diff, diff)
    return d.argmin(axis=1)
