"""Deterministic rendering of one grid image from a factor-value vector.

The image is a 3x3 grid of cells.  The digit glyph is tinted with the digit
color and placed at the cell named by the position factor; the other eight
cells carry one shared distractor shape/color; a texture pattern is
alpha-blended over the whole background first.  Absent factors fall back to
neutral defaults (black background, white digit, center cell, no distractors,
no texture), so specs with a factor subset still render.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import ndimage

from . import assets
from .factors import BiasSpec

_DEFAULTS = {
    "digit_position": 4,  # center cell of the 3x3 grid
}

_NEUTRAL_DIGIT = np.array([1.0, 1.0, 1.0], dtype=np.float32)
_NEUTRAL_DISTRACTOR = np.array([0.6, 0.6, 0.6], dtype=np.float32)


@lru_cache(maxsize=2048)
def _base_canvas(bg_value, tex_type, tex_color, size: int) -> np.ndarray:
    """Background + texture layer, shared by all images with these values."""
    canvas = np.zeros((size, size, 3), dtype=np.float32)
    if bg_value is not None:
        canvas[:] = assets.color_for("background_color", bg_value)
    if tex_type is not None:
        mask = assets.texture_mask(tex_type, size)[..., None] * assets.TEXTURE_ALPHA
        color = (
            assets.color_for("texture_color", tex_color)
            if tex_color is not None
            else _NEUTRAL_DISTRACTOR
        )
        canvas = canvas * (1.0 - mask) + color * mask
    return canvas


def _blend(region: np.ndarray, mask: np.ndarray, color: np.ndarray) -> None:
    m = mask[..., None]
    region *= 1.0 - m
    region += color * m


def compose_image(digit_glyph: np.ndarray, factor_values, spec: BiasSpec) -> np.ndarray:
    """Render one sample image; a pure function of its three arguments.

    ``factor_values`` holds one index per factor in ``spec.factors`` order.
    Raises ``ValueError`` for out-of-range values.
    """
    values = {}
    for f, v in zip(spec.factors, factor_values):
        v = int(v)
        if not 0 <= v < f.cardinality:
            raise ValueError(f"factor {f.name!r}: value {v} outside [0, {f.cardinality})")
        values[f.name] = v

    cell = spec.cell_size
    size = spec.image_size
    canvas = _base_canvas(
        values.get("background_color"),
        values.get("texture_type"),
        values.get("texture_color"),
        size,
    ).copy()

    pos = values.get("digit_position", _DEFAULTS["digit_position"])
    pr, pc = divmod(pos, 3)

    shape = values.get("distractor_shape")
    if shape is not None:
        mask = assets.shape_mask(shape, cell)
        color = (
            assets.color_for("distractor_color", values["distractor_color"])
            if "distractor_color" in values
            else _NEUTRAL_DISTRACTOR
        )
        for r in range(3):
            for c in range(3):
                if (r, c) == (pr, pc):
                    continue
                _blend(canvas[r * cell:(r + 1) * cell, c * cell:(c + 1) * cell], mask, color)

    margin = max(2, cell // 8)
    box = cell - 2 * margin
    if digit_glyph.shape != (box, box):
        zoom = box / digit_glyph.shape[0]
        glyph = ndimage.zoom(digit_glyph.astype(np.float32), zoom, order=1)
        glyph = np.clip(glyph, 0.0, 1.0)[:box, :box]
        if glyph.shape != (box, box):  # zoom can undershoot by one pixel
            pad = np.zeros((box, box), dtype=np.float32)
            pad[: glyph.shape[0], : glyph.shape[1]] = glyph
            glyph = pad
    else:
        glyph = digit_glyph.astype(np.float32)

    digit_color = (
        assets.color_for("digit_color", values["digit_color"])
        if "digit_color" in values
        else _NEUTRAL_DIGIT
    )
    r0, c0 = pr * cell + margin, pc * cell + margin
    _blend(canvas[r0:r0 + box, c0:c0 + box], glyph, digit_color)

    return np.clip(canvas, 0.0, 1.0)


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(image * 255.0).astype(np.uint8)


def from_uint8(image: np.ndarray) -> np.ndarray:
    return image.astype(np.float32) / 255.0
