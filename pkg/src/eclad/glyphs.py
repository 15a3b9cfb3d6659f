"""Embedded stroke glyphs rasterized to boolean masks.

Each glyph is a list of polylines in a normalized [0,1]x[0,1] box
(x right, y down); curved strokes are polygonized arcs. Rasterization
marks every pixel within half the stroke thickness of a segment, with no
anti-aliasing, so the returned mask is exact. Rotation is applied to the
stroke geometry, which keeps the raster rule identical at every angle.
"""

from __future__ import annotations

import math

import numpy as np

Point = tuple[float, float]


def _arc(cx: float, cy: float, r: float, a0: float, a1: float, n: int = 24) -> list[Point]:
    angles = np.linspace(math.radians(a0), math.radians(a1), n)
    return [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in angles]


STROKES: dict[str, list[list[Point]]] = {
    "A": [
        [(0.50, 0.05), (0.12, 0.95)],
        [(0.50, 0.05), (0.88, 0.95)],
        [(0.30, 0.55), (0.70, 0.55)],
    ],
    "B": [
        [(0.18, 0.05), (0.18, 0.95)],
        _arc(0.18, 0.275, 0.225, -90, 90),
        _arc(0.18, 0.725, 0.225, -90, 90),
    ],
    "C": [_arc(0.50, 0.50, 0.40, 60, 300)],
    "D": [
        [(0.18, 0.05), (0.18, 0.95)],
        _arc(0.18, 0.50, 0.45, -90, 90),
    ],
    "E": [
        [(0.20, 0.05), (0.20, 0.95)],
        [(0.20, 0.05), (0.80, 0.05)],
        [(0.20, 0.50), (0.72, 0.50)],
        [(0.20, 0.95), (0.80, 0.95)],
    ],
    "F": [
        [(0.20, 0.05), (0.20, 0.95)],
        [(0.20, 0.05), (0.80, 0.05)],
        [(0.20, 0.50), (0.72, 0.50)],
    ],
    "G": [
        _arc(0.50, 0.50, 0.40, 40, 320),
        [(0.50, 0.55), (0.79, 0.55)],
        [(0.79, 0.55), (0.79, 0.72)],
    ],
    "H": [
        [(0.15, 0.05), (0.15, 0.95)],
        [(0.85, 0.05), (0.85, 0.95)],
        [(0.15, 0.50), (0.85, 0.50)],
    ],
    "O": [_arc(0.50, 0.50, 0.40, 0, 360)],
    "X": [
        [(0.12, 0.05), (0.88, 0.95)],
        [(0.88, 0.05), (0.12, 0.95)],
    ],
    "plus": [
        [(0.50, 0.08), (0.50, 0.92)],
        [(0.08, 0.50), (0.92, 0.50)],
    ],
    "star": [
        [(0.50, 0.08), (0.50, 0.92)],
        [(0.136, 0.29), (0.864, 0.71)],
        [(0.864, 0.29), (0.136, 0.71)],
    ],
    "slash": [[(0.25, 0.92), (0.75, 0.08)]],
    "hash": [
        [(0.35, 0.10), (0.35, 0.90)],
        [(0.65, 0.10), (0.65, 0.90)],
        [(0.15, 0.38), (0.85, 0.38)],
        [(0.15, 0.62), (0.85, 0.62)],
    ],
}


def names() -> list[str]:
    return sorted(STROKES)


def rasterize(name: str, size_px: int, rotation_deg: float = 0.0,
              thickness_px: float | None = None) -> np.ndarray:
    """Render a glyph at roughly ``size_px`` height, cropped to its tight
    bounding box. Returns a bool mask."""
    if name not in STROKES:
        raise ValueError(f"unknown glyph {name!r}; choose from {names()}")
    if size_px < 4:
        raise ValueError("glyph size must be >= 4 px")
    if thickness_px is None:
        thickness_px = max(2.0, 0.20 * size_px)

    # rotate stroke geometry around the glyph center, then scale to pixels
    theta = math.radians(rotation_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    side = int(math.ceil(size_px * 1.3 + thickness_px)) + 2
    half = side / 2.0
    segs = []
    for line in STROKES[name]:
        pts = []
        for u, v in line:
            du, dv = u - 0.5, v - 0.5
            ru = du * cos_t - dv * sin_t
            rv = du * sin_t + dv * cos_t
            pts.append((half + ru * size_px, half + rv * size_px))
        segs.extend((pts[i], pts[i + 1]) for i in range(len(pts) - 1))

    ys, xs = np.mgrid[0:side, 0:side].astype(np.float64)
    mask = np.zeros((side, side), bool)
    r2 = (thickness_px / 2.0) ** 2
    for (ax, ay), (bx, by) in segs:
        dx, dy = bx - ax, by - ay
        len2 = dx * dx + dy * dy
        if len2 == 0.0:
            ddx, ddy = xs - ax, ys - ay
        else:
            t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / len2, 0.0, 1.0)
            ddx = xs - (ax + t * dx)
            ddy = ys - (ay + t * dy)
        mask |= ddx * ddx + ddy * ddy <= r2

    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return mask[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
