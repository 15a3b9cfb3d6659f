"""Numba-jitted kernel implementations.

Twin of ``numpy_impl`` with the same signatures and contracts. All kernels
are compiled without fastmath so results are deterministic; the squared
distance transform stays in exact integer-valued float64 arithmetic.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _clamp(v, lo, hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


@njit(cache=True)
def resize_nearest(src, target_h, target_w):
    sh, sw, c = src.shape
    out = np.empty((target_h, target_w, c), src.dtype)
    for oy in range(target_h):
        py = _clamp((oy + 0.5) * (sh / target_h) - 0.5, 0.0, sh - 1.0)
        iy = int(np.floor(py + 0.5))
        if iy > sh - 1:
            iy = sh - 1
        for ox in range(target_w):
            px = _clamp((ox + 0.5) * (sw / target_w) - 0.5, 0.0, sw - 1.0)
            ix = int(np.floor(px + 0.5))
            if ix > sw - 1:
                ix = sw - 1
            for ch in range(c):
                out[oy, ox, ch] = src[iy, ix, ch]
    return out


@njit(cache=True)
def resize_bilinear(src, target_h, target_w):
    sh, sw, c = src.shape
    out = np.empty((target_h, target_w, c), src.dtype)
    for oy in range(target_h):
        py = _clamp((oy + 0.5) * (sh / target_h) - 0.5, 0.0, sh - 1.0)
        y0 = int(np.floor(py))
        fy = py - y0
        y1 = min(y0 + 1, sh - 1)
        for ox in range(target_w):
            px = _clamp((ox + 0.5) * (sw / target_w) - 0.5, 0.0, sw - 1.0)
            x0 = int(np.floor(px))
            fx = px - x0
            x1 = min(x0 + 1, sw - 1)
            for ch in range(c):
                a = np.float64(src[y0, x0, ch])
                b = np.float64(src[y0, x1, ch])
                d = np.float64(src[y1, x0, ch])
                e = np.float64(src[y1, x1, ch])
                top = a + fx * (b - a)
                bot = d + fx * (e - d)
                out[oy, ox, ch] = top + fy * (bot - top)
    return out


@njit(cache=True)
def _keys_weight(t):
    # Catmull-Rom cubic (a = -0.5)
    t = abs(t)
    if t <= 1.0:
        return (1.5 * t - 2.5) * t * t + 1.0
    if t < 2.0:
        return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    return 0.0


@njit(cache=True)
def resize_bicubic(src, target_h, target_w):
    sh, sw, c = src.shape
    out = np.empty((target_h, target_w, c), src.dtype)
    wy = np.empty(4, np.float64)
    wx = np.empty(4, np.float64)
    for oy in range(target_h):
        py = _clamp((oy + 0.5) * (sh / target_h) - 0.5, 0.0, sh - 1.0)
        y0 = int(np.floor(py))
        fy = py - y0
        for t in range(4):
            wy[t] = _keys_weight(fy - (t - 1))
        for ox in range(target_w):
            px = _clamp((ox + 0.5) * (sw / target_w) - 0.5, 0.0, sw - 1.0)
            x0 = int(np.floor(px))
            fx = px - x0
            for t in range(4):
                wx[t] = _keys_weight(fx - (t - 1))
            for ch in range(c):
                acc = 0.0
                for ty in range(4):
                    iy = _clamp(y0 + ty - 1, 0, sh - 1)
                    row = 0.0
                    for tx in range(4):
                        ix = _clamp(x0 + tx - 1, 0, sw - 1)
                        row += wx[tx] * np.float64(src[iy, ix, ch])
                    acc += wy[ty] * row
                out[oy, ox, ch] = acc
    return out


@njit(cache=True)
def conv2d_fwd(x, w, b):
    h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    ph, pw = kh // 2, kw // 2
    out = np.empty((h, wd, cout), x.dtype)
    for oy in range(h):
        for ox in range(wd):
            for co in range(cout):
                acc = b[co]
                for ky in range(kh):
                    iy = oy + ky - ph
                    if iy < 0 or iy >= h:
                        continue
                    for kx in range(kw):
                        ix = ox + kx - pw
                        if ix < 0 or ix >= wd:
                            continue
                        for ci in range(cin):
                            acc += x[iy, ix, ci] * w[ky, kx, ci, co]
                out[oy, ox, co] = acc
    return out


@njit(cache=True)
def conv2d_bwd_params(x, dy, kh, kw):
    h, wd, cin = x.shape
    cout = dy.shape[2]
    ph, pw = kh // 2, kw // 2
    dw = np.zeros((kh, kw, cin, cout), x.dtype)
    for oy in range(h):
        for ox in range(wd):
            for ky in range(kh):
                iy = oy + ky - ph
                if iy < 0 or iy >= h:
                    continue
                for kx in range(kw):
                    ix = ox + kx - pw
                    if ix < 0 or ix >= wd:
                        continue
                    for ci in range(cin):
                        xv = x[iy, ix, ci]
                        for co in range(cout):
                            dw[ky, kx, ci, co] += xv * dy[oy, ox, co]
    return dw


@njit(cache=True)
def maxpool2_fwd(x):
    h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    y = np.empty((h2, w2, c), x.dtype)
    idx = np.empty((h2, w2, c), np.int8)
    for oy in range(h2):
        for ox in range(w2):
            for ch in range(c):
                best = x[2 * oy, 2 * ox, ch]
                bi = 0
                for j in range(1, 4):
                    v = x[2 * oy + j // 2, 2 * ox + j % 2, ch]
                    if v > best:
                        best = v
                        bi = j
                y[oy, ox, ch] = best
                idx[oy, ox, ch] = bi
    return y, idx


@njit(cache=True)
def maxpool2_bwd(dy, idx):
    h2, w2, c = dy.shape
    dx = np.zeros((h2 * 2, w2 * 2, c), dy.dtype)
    for oy in range(h2):
        for ox in range(w2):
            for ch in range(c):
                j = idx[oy, ox, ch]
                dx[2 * oy + j // 2, 2 * ox + j % 2, ch] = dy[oy, ox, ch]
    return dx


@njit(cache=True)
def edt_sq(seeds):
    h, w = seeds.shape
    unreachable = np.float64(h + w + 1)
    g = np.empty((h, w), np.float64)
    for x in range(w):
        g[0, x] = 0.0 if seeds[0, x] else unreachable
    for y in range(1, h):
        for x in range(w):
            v = 0.0 if seeds[y, x] else unreachable
            if g[y - 1, x] + 1.0 < v:
                v = g[y - 1, x] + 1.0
            g[y, x] = v
    for y in range(h - 2, -1, -1):
        for x in range(w):
            if g[y + 1, x] + 1.0 < g[y, x]:
                g[y, x] = g[y + 1, x] + 1.0
    # row-wise lower envelope of parabolas j -> g(y,j)^2 + (x-j)^2
    out = np.empty((h, w), np.float64)
    v = np.empty(w, np.int64)
    z = np.empty(w + 1, np.float64)
    f = np.empty(w, np.float64)
    for y in range(h):
        for x in range(w):
            f[x] = g[y, x] * g[y, x]
        k = 0
        v[0] = 0
        z[0] = -1e300
        z[1] = 1e300
        for q in range(1, w):
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            while s <= z[k]:
                k -= 1
                s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = 1e300
        k = 0
        for x in range(w):
            while z[k + 1] < x:
                k += 1
            d = np.float64(x - v[k])
            out[y, x] = d * d + f[v[k]]
    return out


@njit(cache=True)
def kmeans_assign(points, centroids):
    n, dim = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, np.int64)
    for i in range(n):
        best = np.inf
        bj = 0
        for j in range(k):
            acc = 0.0
            for d in range(dim):
                diff = points[i, d] - centroids[j, d]
                acc += diff * diff
            if acc < best:
                best = acc
                bj = j
        labels[i] = bj
    return labels
