"""Minimal line-plot renderer writing PNG via the imaging library.

Draws axes, ticks, series polylines, and a legend onto a numpy canvas
with an embedded 5x7 bitmap font. Covers what the study commands need;
reports stay the machine-readable contract, plots are a convenience.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

PALETTE = [
    (214, 69, 65),
    (31, 119, 180),
    (44, 160, 44),
    (148, 103, 189),
    (255, 127, 14),
    (23, 190, 207),
]

_F = {
    "0": [".XXX.", "X...X", "X..XX", "X.X.X", "XX..X", "X...X", ".XXX."],
    "1": ["..X..", ".XX..", "..X..", "..X..", "..X..", "..X..", ".XXX."],
    "2": [".XXX.", "X...X", "....X", "...X.", "..X..", ".X...", "XXXXX"],
    "3": [".XXX.", "X...X", "....X", "..XX.", "....X", "X...X", ".XXX."],
    "4": ["...X.", "..XX.", ".X.X.", "X..X.", "XXXXX", "...X.", "...X."],
    "5": ["XXXXX", "X....", "XXXX.", "....X", "....X", "X...X", ".XXX."],
    "6": [".XXX.", "X....", "X....", "XXXX.", "X...X", "X...X", ".XXX."],
    "7": ["XXXXX", "....X", "...X.", "..X..", ".X...", ".X...", ".X..."],
    "8": [".XXX.", "X...X", "X...X", ".XXX.", "X...X", "X...X", ".XXX."],
    "9": [".XXX.", "X...X", "X...X", ".XXXX", "....X", "....X", ".XXX."],
    "a": [".....", ".....", ".XXX.", "....X", ".XXXX", "X...X", ".XXXX"],
    "b": ["X....", "X....", "XXXX.", "X...X", "X...X", "X...X", "XXXX."],
    "c": [".....", ".....", ".XXX.", "X....", "X....", "X...X", ".XXX."],
    "d": ["....X", "....X", ".XXXX", "X...X", "X...X", "X...X", ".XXXX"],
    "e": [".....", ".....", ".XXX.", "X...X", "XXXXX", "X....", ".XXX."],
    "f": ["..XX.", ".X...", "XXXX.", ".X...", ".X...", ".X...", ".X..."],
    "g": [".....", ".XXXX", "X...X", "X...X", ".XXXX", "....X", ".XXX."],
    "h": ["X....", "X....", "XXXX.", "X...X", "X...X", "X...X", "X...X"],
    "i": ["..X..", ".....", ".XX..", "..X..", "..X..", "..X..", ".XXX."],
    "j": ["...X.", ".....", "..XX.", "...X.", "...X.", "X..X.", ".XX.."],
    "k": ["X....", "X....", "X..X.", "X.X..", "XX...", "X.X..", "X..X."],
    "l": [".XX..", "..X..", "..X..", "..X..", "..X..", "..X..", ".XXX."],
    "m": [".....", ".....", "XX.X.", "X.X.X", "X.X.X", "X.X.X", "X.X.X"],
    "n": [".....", ".....", "XXXX.", "X...X", "X...X", "X...X", "X...X"],
    "o": [".....", ".....", ".XXX.", "X...X", "X...X", "X...X", ".XXX."],
    "p": [".....", "XXXX.", "X...X", "X...X", "XXXX.", "X....", "X...."],
    "q": [".....", ".XXXX", "X...X", "X...X", ".XXXX", "....X", "....X"],
    "r": [".....", ".....", "X.XX.", "XX..X", "X....", "X....", "X...."],
    "s": [".....", ".....", ".XXXX", "X....", ".XXX.", "....X", "XXXX."],
    "t": [".X...", ".X...", "XXXX.", ".X...", ".X...", ".X..X", "..XX."],
    "u": [".....", ".....", "X...X", "X...X", "X...X", "X...X", ".XXXX"],
    "v": [".....", ".....", "X...X", "X...X", "X...X", ".X.X.", "..X.."],
    "w": [".....", ".....", "X.X.X", "X.X.X", "X.X.X", "X.X.X", ".X.X."],
    "x": [".....", ".....", "X...X", ".X.X.", "..X..", ".X.X.", "X...X"],
    "y": [".....", "X...X", "X...X", ".XXXX", "....X", "X...X", ".XXX."],
    "z": [".....", ".....", "XXXXX", "...X.", "..X..", ".X...", "XXXXX"],
    ".": [".....", ".....", ".....", ".....", ".....", ".XX..", ".XX.."],
    "-": [".....", ".....", ".....", "XXXX.", ".....", ".....", "....."],
    "+": [".....", "..X..", "..X..", "XXXXX", "..X..", "..X..", "....."],
    ":": [".....", ".XX..", ".XX..", ".....", ".XX..", ".XX..", "....."],
    " ": [".....", ".....", ".....", ".....", ".....", ".....", "....."],
}


def _draw_text(canvas: np.ndarray, x: int, y: int, text: str,
               color=(20, 20, 20)) -> None:
    for ch in text.lower():
        rows = _F.get(ch, _F[" "])
        for r, row in enumerate(rows):
            for c, bit in enumerate(row):
                if bit == "X" and 0 <= y + r < canvas.shape[0] and 0 <= x + c < canvas.shape[1]:
                    canvas[y + r, x + c] = color
        x += 6


def _draw_line(canvas: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    h, w = canvas.shape[:2]
    while True:
        if 0 <= y0 < h and 0 <= x0 < w:
            canvas[y0, x0] = color
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def line_plot(path, xs, series: dict[str, list[float]], title: str = "",
              xlabel: str = "", ylabel: str = "",
              size: tuple[int, int] = (640, 440)) -> None:
    """Plot one or more y-series over shared x values and save a PNG."""
    if not series:
        raise ValueError("no series to plot")
    xs = np.asarray(xs, np.float64)
    width, height = size
    canvas = np.full((height, width, 3), 255, np.uint8)
    left, right, top, bottom = 70, width - 20, 40, height - 50

    all_y = np.concatenate([np.asarray(v, np.float64) for v in series.values()])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return int(round(left + (x - x_lo) / (x_hi - x_lo) * (right - left)))

    def py(y):
        return int(round(bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top)))

    axis = (60, 60, 60)
    _draw_line(canvas, left, top, left, bottom, axis)
    _draw_line(canvas, left, bottom, right, bottom, axis)
    for t in np.linspace(x_lo, x_hi, 5):
        x = px(t)
        _draw_line(canvas, x, bottom, x, bottom + 4, axis)
        _draw_text(canvas, x - 10, bottom + 8, f"{t:g}"[:8])
    for t in np.linspace(y_lo, y_hi, 5):
        y = py(t)
        _draw_line(canvas, left - 4, y, left, y, axis)
        _draw_text(canvas, 8, y - 3, f"{t:.3g}"[:9])

    for idx, (name, values) in enumerate(series.items()):
        color = PALETTE[idx % len(PALETTE)]
        pts = [(px(x), py(y)) for x, y in zip(xs, values)]
        for (ax, ay), (bx, by) in zip(pts, pts[1:]):
            _draw_line(canvas, ax, ay, bx, by, color)
        for cx, cy in pts:
            canvas[max(cy - 1, 0):cy + 2, max(cx - 1, 0):cx + 2] = color
        _draw_text(canvas, left + 10, top + 4 + 10 * idx, name, color)

    if title:
        _draw_text(canvas, left, 12, title)
    if xlabel:
        _draw_text(canvas, (left + right) // 2 - 3 * len(xlabel), height - 14, xlabel)
    if ylabel:
        _draw_text(canvas, 8, top - 16, ylabel)
    Image.fromarray(canvas, "RGB").save(path)
