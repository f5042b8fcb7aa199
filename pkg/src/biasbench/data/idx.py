"""Digit glyph corpora: IDX binary ingestion plus the bundled fallback font.

The IDX reader handles the classic big-endian image/label pair used by MNIST
distributions.  When no corpus files are available (offline test runs), the
procedural ten-glyph font from :mod:`biasbench.data.assets` stands in, with
per-draw affine jitter providing intra-class variation.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import assets

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


class CorpusError(Exception):
    """Raised when a digit corpus cannot be ingested."""


class DigitCorpus:
    """Per-class glyph bank with seeded sampling.

    ``glyphs_by_class[c]`` is a float32 array (n_c, h, w) with values in
    [0, 1].  ``jitter`` applies a random affine distortion per draw (used by
    the procedural font, whose bank holds a single glyph per class).
    """

    def __init__(self, glyphs_by_class, with_replacement=True, jitter=False):
        if len(glyphs_by_class) != 10:
            raise CorpusError(f"expected 10 classes, got {len(glyphs_by_class)}")
        self.glyphs_by_class = [np.asarray(g, dtype=np.float32) for g in glyphs_by_class]
        for c, bank in enumerate(self.glyphs_by_class):
            if bank.ndim != 3 or len(bank) == 0:
                raise CorpusError(f"class {c}: empty or malformed glyph bank")
        self.with_replacement = with_replacement
        self.jitter = jitter
        self._queues = None

    @property
    def class_counts(self):
        return [len(g) for g in self.glyphs_by_class]

    def reset_queues(self, rng: np.random.Generator):
        """Prepare shuffled per-class queues for without-replacement draws."""
        self._queues = [list(rng.permutation(len(g))) for g in self.glyphs_by_class]

    def sample(self, y: int, rng: np.random.Generator) -> np.ndarray:
        bank = self.glyphs_by_class[y]
        if self.with_replacement:
            idx = int(rng.integers(len(bank)))
        else:
            if self._queues is None or not self._queues[y]:
                raise CorpusError(f"class {y}: glyph queue exhausted")
            idx = self._queues[y].pop()
        glyph = bank[idx]
        if self.jitter:
            glyph = assets.jitter_glyph(glyph, rng)
        return glyph


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CorpusError(f"{path}: truncated file while reading {what}")
    return data


def _read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, path, "header"))
        if magic != IDX_IMAGE_MAGIC:
            raise CorpusError(f"{path}: bad image magic {magic} (expected {IDX_IMAGE_MAGIC})")
        raw = _read_exact(fh, count * rows * cols, path, "pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)


def _read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, count = struct.unpack(">II", _read_exact(fh, 8, path, "header"))
        if magic != IDX_LABEL_MAGIC:
            raise CorpusError(f"{path}: bad label magic {magic} (expected {IDX_LABEL_MAGIC})")
        raw = _read_exact(fh, count, path, "label data")
    return np.frombuffer(raw, dtype=np.uint8)


def load_idx_corpus(images_path, labels_path, with_replacement=True) -> DigitCorpus:
    """Load an IDX image/label pair into per-class glyph banks."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    images = _read_idx_images(images_path)
    labels = _read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise CorpusError(
            f"{images_path} has {len(images)} images but {labels_path} has "
            f"{len(labels)} labels"
        )
    banks = []
    for c in range(10):
        sel = images[labels == c]
        if len(sel) == 0:
            raise CorpusError(f"{images_path}: no glyphs for class {c}")
        banks.append(sel.astype(np.float32) / 255.0)
    return DigitCorpus(banks, with_replacement=with_replacement)


def synthetic_font_corpus(jitter: bool = True) -> DigitCorpus:
    """The bundled fallback corpus: one procedural glyph per class."""
    banks = [assets.base_glyph(d)[None] for d in range(10)]
    return DigitCorpus(banks, with_replacement=True, jitter=jitter)
