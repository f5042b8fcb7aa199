"""Renderable asset banks: colors, distractor shapes, textures, digit font.

All banks have ten entries, indexed by factor value.  Color factors share a
single ten-color palette but each reads it at a different rotation, so the
class-aligned combination never paints the digit in the background color
(and the anchor colors land where they should: value 1 of the digit bank is
green, value 2 red, value 1 of the background bank purple).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from matplotlib.path import Path
from scipy import ndimage

BASE_PALETTE = np.array(
    [
        (0, 70, 255),     # blue
        (0, 180, 0),      # green
        (230, 30, 30),    # red
        (255, 220, 0),    # yellow
        (140, 40, 200),   # purple
        (255, 140, 0),    # orange
        (0, 210, 210),    # cyan
        (230, 50, 200),   # magenta
        (140, 90, 40),    # brown
        (240, 240, 240),  # white
    ],
    dtype=np.float32,
) / 255.0

# Per-factor read offset into the shared palette.
COLOR_BANK_ROTATION = {
    "digit_color": 0,
    "background_color": 3,
    "distractor_color": 5,
    "texture_color": 7,
}

SHAPE_NAMES = (
    "circle", "triangle", "square", "pentagon", "hexagon",
    "star", "diamond", "plus", "ring", "chevron",
)

TEXTURE_NAMES = (
    "stripes_h", "stripes_v", "diag_down", "diag_up", "dots",
    "checker", "grid", "waves", "noise", "blank",
)

TEXTURE_ALPHA = 0.25


def color_for(factor_name: str, value: int) -> np.ndarray:
    """RGB triple (floats in [0,1]) for one value of a color factor."""
    rot = COLOR_BANK_ROTATION[factor_name]
    return BASE_PALETTE[(value + rot) % len(BASE_PALETTE)]


def _pixel_grid(size: int):
    # Pixel-center coordinates in [-1, 1], y pointing down.
    c = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    return np.meshgrid(c, c)  # xx, yy


def _regular_polygon(n: int, radius: float, phase: float = -np.pi / 2):
    ang = phase + 2 * np.pi * np.arange(n) / n
    return np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)


def _polygon_mask(verts: np.ndarray, size: int) -> np.ndarray:
    xx, yy = _pixel_grid(size)
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    inside = Path(verts).contains_points(pts)
    return inside.reshape(size, size).astype(np.float32)


@lru_cache(maxsize=None)
def shape_mask(index: int, size: int) -> np.ndarray:
    """Filled glyph of one distractor shape on a size x size cell."""
    name = SHAPE_NAMES[index]
    xx, yy = _pixel_grid(size)
    rr = np.hypot(xx, yy)
    s = 0.62  # shape radius relative to half-cell
    if name == "circle":
        return (rr <= s).astype(np.float32)
    if name == "ring":
        return ((rr <= s) & (rr >= 0.55 * s)).astype(np.float32)
    if name == "square":
        return ((np.abs(xx) <= 0.82 * s) & (np.abs(yy) <= 0.82 * s)).astype(np.float32)
    if name == "diamond":
        return ((np.abs(xx) + np.abs(yy)) <= 1.15 * s).astype(np.float32)
    if name == "plus":
        arm, thick = s, 0.36 * s
        horiz = (np.abs(xx) <= arm) & (np.abs(yy) <= thick)
        vert = (np.abs(xx) <= thick) & (np.abs(yy) <= arm)
        return (horiz | vert).astype(np.float32)
    if name == "triangle":
        verts = _regular_polygon(3, 1.1 * s)
    elif name == "pentagon":
        verts = _regular_polygon(5, s)
    elif name == "hexagon":
        verts = _regular_polygon(6, s)
    elif name == "star":
        outer = _regular_polygon(5, 1.15 * s)
        inner = _regular_polygon(5, 0.45 * s, phase=-np.pi / 2 + np.pi / 5)
        verts = np.empty((10, 2))
        verts[0::2] = outer
        verts[1::2] = inner
    elif name == "chevron":
        verts = np.array(
            [(-1.0, -0.55), (0.0, 0.25), (1.0, -0.55),
             (1.0, -0.05), (0.0, 0.75), (-1.0, -0.05)]
        ) * s
    else:  # pragma: no cover
        raise ValueError(name)
    return _polygon_mask(verts, size)


@lru_cache(maxsize=None)
def texture_mask(index: int, size: int) -> np.ndarray:
    """Binary pattern covering a size x size image, blended at TEXTURE_ALPHA."""
    name = TEXTURE_NAMES[index]
    xi, yi = np.meshgrid(np.arange(size), np.arange(size))
    period = max(4, size // 6)
    if name == "blank":
        return np.zeros((size, size), dtype=np.float32)
    if name == "stripes_h":
        return ((yi // (period // 2)) % 2 == 0).astype(np.float32)
    if name == "stripes_v":
        return ((xi // (period // 2)) % 2 == 0).astype(np.float32)
    if name == "diag_down":
        return (((xi + yi) // (period // 2)) % 2 == 0).astype(np.float32)
    if name == "diag_up":
        return (((xi - yi) // (period // 2)) % 2 == 0).astype(np.float32)
    if name == "dots":
        dx = xi % period - period / 2
        dy = yi % period - period / 2
        return (dx * dx + dy * dy <= (period / 4) ** 2).astype(np.float32)
    if name == "checker":
        return (((xi // period) + (yi // period)) % 2 == 0).astype(np.float32)
    if name == "grid":
        w = max(1, period // 4)
        return ((xi % period < w) | (yi % period < w)).astype(np.float32)
    if name == "waves":
        phase = 2 * np.pi * (xi / size * 4 + 0.5 * np.sin(2 * np.pi * yi / size * 2))
        return (np.sin(phase) > 0.2).astype(np.float32)
    if name == "noise":
        rng = np.random.Generator(np.random.PCG64(0xB1A5))
        return (rng.random((size, size)) < 0.4).astype(np.float32)
    raise ValueError(name)  # pragma: no cover


# ---------------------------------------------------------------------------
# Procedural digit font.  Each digit is a set of polyline strokes on the unit
# square (y down); glyphs rasterize to 28x28 like classic digit corpora.

GLYPH_SIZE = 28

_D = {
    0: [[(0.50, 0.10), (0.74, 0.22), (0.78, 0.50), (0.74, 0.78), (0.50, 0.90),
         (0.26, 0.78), (0.22, 0.50), (0.26, 0.22), (0.50, 0.10)]],
    1: [[(0.34, 0.26), (0.52, 0.10), (0.52, 0.90)], [(0.34, 0.90), (0.70, 0.90)]],
    2: [[(0.24, 0.28), (0.32, 0.13), (0.55, 0.10), (0.74, 0.20), (0.75, 0.38),
         (0.60, 0.55), (0.24, 0.88)], [(0.24, 0.88), (0.78, 0.88)]],
    3: [[(0.26, 0.16), (0.55, 0.10), (0.74, 0.25), (0.62, 0.44), (0.44, 0.48)],
        [(0.44, 0.48), (0.66, 0.53), (0.78, 0.70), (0.60, 0.88), (0.26, 0.84)]],
    4: [[(0.64, 0.90), (0.64, 0.10), (0.22, 0.64), (0.82, 0.64)]],
    5: [[(0.74, 0.12), (0.32, 0.12), (0.28, 0.46), (0.56, 0.42), (0.74, 0.56),
         (0.72, 0.78), (0.52, 0.90), (0.28, 0.84)]],
    6: [[(0.66, 0.10), (0.44, 0.26), (0.30, 0.52), (0.30, 0.76), (0.48, 0.90),
         (0.68, 0.80), (0.70, 0.60), (0.52, 0.50), (0.32, 0.58)]],
    7: [[(0.22, 0.12), (0.78, 0.12), (0.46, 0.90)], [(0.34, 0.50), (0.64, 0.50)]],
    8: [[(0.50, 0.46), (0.68, 0.36), (0.66, 0.17), (0.50, 0.10), (0.34, 0.17),
         (0.32, 0.36), (0.50, 0.46)],
        [(0.50, 0.46), (0.30, 0.58), (0.28, 0.78), (0.50, 0.90), (0.72, 0.78),
         (0.70, 0.58), (0.50, 0.46)]],
    9: [[(0.70, 0.34), (0.58, 0.14), (0.38, 0.14), (0.28, 0.32), (0.36, 0.48),
         (0.58, 0.50), (0.70, 0.34)], [(0.70, 0.34), (0.68, 0.62), (0.58, 0.90)]],
}


def _stroke_distance(xx, yy, p0, p1):
    px, py = p1[0] - p0[0], p1[1] - p0[1]
    norm = px * px + py * py
    if norm == 0:
        return np.hypot(xx - p0[0], yy - p0[1])
    t = np.clip(((xx - p0[0]) * px + (yy - p0[1]) * py) / norm, 0.0, 1.0)
    return np.hypot(xx - (p0[0] + t * px), yy - (p0[1] + t * py))


@lru_cache(maxsize=None)
def base_glyph(digit: int, size: int = GLYPH_SIZE) -> np.ndarray:
    """Rasterized stroke glyph for one digit, float32 intensities in [0,1]."""
    c = (np.arange(size) + 0.5) / size
    xx, yy = np.meshgrid(c, c)
    dist = np.full((size, size), np.inf, dtype=np.float64)
    for stroke in _D[digit]:
        for p0, p1 in zip(stroke[:-1], stroke[1:]):
            dist = np.minimum(dist, _stroke_distance(xx, yy, p0, p1))
    thickness = 0.055
    glyph = np.clip(1.0 - (dist - thickness) / 0.035, 0.0, 1.0)
    return glyph.astype(np.float32)


def base_glyphs(size: int = GLYPH_SIZE) -> np.ndarray:
    return np.stack([base_glyph(d, size) for d in range(10)])


def jitter_glyph(glyph: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random affine distortion of a glyph (rotation, scale, shear, shift).

    Supplies the intra-class variation of the procedural font; the draw is
    fully determined by the caller's random stream.
    """
    size = glyph.shape[0]
    theta = rng.uniform(-0.30, 0.30)
    sx = rng.uniform(0.80, 1.20)
    sy = rng.uniform(0.80, 1.20)
    shear = rng.uniform(-0.25, 0.25)
    tx, ty = rng.uniform(-2.5, 2.5, size=2) * size / GLYPH_SIZE
    cosb, sinb = np.cos(theta), np.sin(theta)
    rot = np.array([[cosb, -sinb], [sinb, cosb]])
    shr = np.array([[1.0, shear], [0.0, 1.0]])
    scl = np.array([[sx, 0.0], [0.0, sy]])
    fwd = rot @ shr @ scl
    inv = np.linalg.inv(fwd)
    center = (size - 1) / 2.0
    offset = np.array([center, center]) - inv @ np.array([center + ty, center + tx])
    out = ndimage.affine_transform(glyph, inv, offset=offset, order=1, mode="constant", cval=0.0)
    gamma = rng.uniform(0.6, 1.6)
    return np.clip(out, 0.0, 1.0).astype(np.float32) ** np.float32(gamma)
