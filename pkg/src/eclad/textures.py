"""Procedural fill textures for the synthetic datasets.

Every texture is a function (height, width, rng) -> float32 RGB field in
[0, 1], deterministic given the generator state. The palettes are chosen
to be mutually distinct so clustered descriptors can separate them; no
photographic data is bundled.
"""

from __future__ import annotations

import numpy as np

from . import tensors


def _value_noise(h: int, w: int, rng: np.random.Generator, cell: int) -> np.ndarray:
    """Smooth noise in [0,1]: a coarse random grid upscaled bilinearly."""
    gh = h // cell + 2
    gw = w // cell + 2
    grid = rng.random((gh, gw, 1), np.float32)
    return tensors.upscale(grid, gh * cell, gw * cell, "bilinear")[:h, :w, 0]


def _stack(r: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.stack([r, g, b], axis=2).astype(np.float32)
    return np.clip(out, 0.0, 1.0)


def cork(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    # gentle large-scale mottling only: descriptors of a primitive cluster
    # tightest when its fill keeps local variance low
    coarse = _value_noise(h, w, rng, 8)
    grain = rng.random((h, w), np.float32)
    lum = 0.32 + 0.14 * coarse + 0.04 * grain
    return _stack(lum * 1.25, lum * 0.85, lum * 0.55)


def aluminum_foil(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    sheen = _value_noise(h, w, rng, 5)
    speckle = rng.random((h, w), np.float32)
    g = 0.40 + 0.18 * sheen + 0.38 * speckle
    return _stack(g, g, np.minimum(g * 1.06, 1.0))


def cotton(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    angle = rng.uniform(0.0, np.pi)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    period = rng.uniform(5.0, 8.0)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float32)
    stripes = 0.5 + 0.5 * np.sin(
        2.0 * np.pi * (xs * np.cos(angle) + ys * np.sin(angle)) / period + phase
    )
    fuzz = rng.random((h, w), np.float32)
    lum = 0.84 + 0.10 * stripes + 0.05 * fuzz
    return _stack(lum, lum, lum * 0.94)


def orange_peel(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    bumps = _value_noise(h, w, rng, 4)
    pores = rng.random((h, w), np.float32)
    return _stack(
        0.88 + 0.10 * bumps + 0.02 * pores,
        0.42 + 0.22 * bumps,
        0.05 + 0.10 * bumps,
    )


def sponge(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    cells = _value_noise(h, w, rng, 6)
    holes = (cells < 0.42).astype(np.float32)
    grain = rng.random((h, w), np.float32)
    lum = (0.60 + 0.30 * cells + 0.06 * grain) * (1.0 - 0.45 * holes)
    return _stack(lum * 1.06, lum * 0.92, lum * 0.40)


NAMES = {
    "cork": cork,
    "aluminum_foil": aluminum_foil,
    "cotton": cotton,
    "orange_peel": orange_peel,
    "sponge": sponge,
}


def render_fill(fill, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Evaluate a fill over the full frame.

    ``fill`` is a texture name or an (r, g, b) tuple in [0, 1]; solid
    fills still consume one rng draw so downstream draws stay aligned
    whichever fill a primitive uses.
    """
    if isinstance(fill, str):
        if fill not in NAMES:
            raise ValueError(f"unknown texture {fill!r}; choose from {sorted(NAMES)}")
        return NAMES[fill](h, w, rng)
    rng.random()
    r, g, b = fill
    out = np.empty((h, w, 3), np.float32)
    out[..., 0] = r
    out[..., 1] = g
    out[..., 2] = b
    return out
