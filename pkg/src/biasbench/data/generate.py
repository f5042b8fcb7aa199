"""Dataset generation: factor sampling, rendering, manifest and archives.

Every sample is a pure function of (spec, split, index): factor draws and
glyph jitter come from a per-sample random stream derived from the spec seed,
so regeneration is byte-identical and samples could be produced in any order.

Images are stored either as individual PNG files or as one packed binary
archive per split (little-endian header: magic, version, dtype code, ndim,
dims; then row-major samples).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compose import compose_image, to_uint8
from .factors import SPLITS, BiasSpec, is_majority, sample_factor_value
from .idx import DigitCorpus

GENERATOR_VERSION = "1.0"

PACK_MAGIC = b"BBPK"
PACK_VERSION = 1
_DTYPE_CODES = {0: np.uint8, 1: np.float32}
_DTYPE_TO_CODE = {np.dtype(np.uint8): 0, np.dtype(np.float32): 1}


class GenerationError(Exception):
    pass


def write_packed(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array)
    code = _DTYPE_TO_CODE.get(array.dtype)
    if code is None:
        raise ValueError(f"unsupported dtype {array.dtype}")
    with open(path, "wb") as fh:
        fh.write(PACK_MAGIC)
        fh.write(struct.pack("<II", PACK_VERSION, code))
        fh.write(struct.pack("<I", array.ndim))
        fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fh.write(array.tobytes())


def read_packed(path, memmap: bool = True) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != PACK_MAGIC:
            raise GenerationError(f"{path}: bad archive magic {magic!r}")
        version, code = struct.unpack("<II", fh.read(8))
        if version != PACK_VERSION:
            raise GenerationError(f"{path}: unsupported archive version {version}")
        (ndim,) = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        offset = fh.tell()
    dtype = _DTYPE_CODES[code]
    if memmap:
        return np.memmap(path, dtype=dtype, mode="r", offset=offset, shape=shape)
    data = np.fromfile(path, dtype=dtype, offset=offset)
    return data.reshape(shape)


@dataclass
class DatasetManifest:
    """Header plus one record per sample, in generation order."""

    header: dict
    records: list = field(default_factory=list)

    def split_records(self, split: str):
        return [r for r in self.records if r["split"] == split]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps(self.header, sort_keys=True, separators=(",", ":")) + "\n")
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise GenerationError(f"{path}: empty manifest")
        header = json.loads(lines[0])
        if header.get("kind") != "biasbench-manifest":
            raise GenerationError(f"{path}: not a dataset manifest")
        return cls(header=header, records=[json.loads(ln) for ln in lines[1:]])


def _sample_rng(seed: int, split_idx: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, split_idx, index))))


def generate_dataset(spec: BiasSpec, corpus: DigitCorpus, out_dir, fmt: str = "packed") -> DatasetManifest:
    """Generate all splits described by ``spec`` into ``out_dir``."""
    if fmt not in ("packed", "png"):
        raise GenerationError(f"unknown format {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    splits = [s for s in SPLITS if s in spec.split_sizes]
    for split in splits:
        if spec.split_sizes[split] == 0:
            raise GenerationError(f"split {split!r} has size 0")
    if not corpus.with_replacement:
        total = sum(spec.split_sizes[s] for s in splits)
        if min(corpus.class_counts) < total:
            raise GenerationError(
                "corpus too small for sampling without replacement "
                f"(smallest class {min(corpus.class_counts)}, need up to {total})"
            )
        corpus.reset_queues(_sample_rng(spec.seed, -1, 0))

    size = spec.image_size
    header = {
        "kind": "biasbench-manifest",
        "version": 1,
        "task": "grid_images",
        "spec": spec.to_dict(),
        "generator_version": GENERATOR_VERSION,
        "format": fmt,
        "image_shape": [size, size, 3],
    }
    manifest = DatasetManifest(header=header)

    for split_idx, split in enumerate(splits):
        n = spec.split_sizes[split]
        p_bias = {f.name: spec.factor_p_bias(split, f.name) for f in spec.factors}
        images = np.empty((n, size, size, 3), dtype=np.uint8) if fmt == "packed" else None
        if fmt == "png":
            (out_dir / "png" / split).mkdir(parents=True, exist_ok=True)
        for i in range(n):
            rng = _sample_rng(spec.seed, split_idx, i)
            y = int(rng.integers(spec.num_classes))
            b = [sample_factor_value(y, f, p_bias[f.name], rng) for f in spec.factors]
            glyph = corpus.sample(y, rng)
            img = to_uint8(compose_image(glyph, b, spec))
            if fmt == "packed":
                images[i] = img
                loc = f"{split}.pack:{i}"
            else:
                rel = f"png/{split}/{i:06d}.png"
                _save_png(out_dir / rel, img)
                loc = rel
            manifest.records.append(
                {
                    "split": split,
                    "i": i,
                    "y": y,
                    "b": b,
                    "maj": [int(m) for m in is_majority(y, b, spec.factors)],
                    "loc": loc,
                }
            )
        if fmt == "packed":
            write_packed(out_dir / f"{split}.pack", images)

    manifest.save(out_dir / "manifest.jsonl")
    return manifest


def _save_png(path, img_u8: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(img_u8, mode="RGB").save(path)


def _load_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


@dataclass
class SplitArrays:
    """In-memory (or memmapped) view of one split."""

    x: np.ndarray          # images (n, h, w, 3) uint8, or vectors (n, d) float32
    y: np.ndarray          # (n,) int64
    b: np.ndarray          # (n, n_factors) int64 factor values
    maj: np.ndarray        # (n, n_factors) bool class-aligned flags

    def __len__(self):
        return len(self.y)


@dataclass
class LoadedDataset:
    manifest: DatasetManifest
    splits: dict

    @property
    def task(self) -> str:
        return self.manifest.header["task"]

    @property
    def factor_names(self) -> list[str]:
        if self.task == "grid_images":
            return [f["name"] for f in self.manifest.header["spec"]["factors"]]
        return list(self.manifest.header["factors"])

    @property
    def factor_cardinalities(self) -> list[int]:
        if self.task == "grid_images":
            return [f["cardinality"] for f in self.manifest.header["spec"]["factors"]]
        return list(self.manifest.header["cardinalities"])

    @property
    def num_classes(self) -> int:
        if self.task == "grid_images":
            return self.manifest.header["spec"].get("num_classes", 10)
        return self.manifest.header["num_classes"]


def load_dataset(dataset_dir, memmap: bool = True) -> LoadedDataset:
    dataset_dir = Path(dataset_dir)
    manifest = DatasetManifest.load(dataset_dir / "manifest.jsonl")
    fmt = manifest.header["format"]
    splits = {}
    for split in SPLITS:
        recs = manifest.split_records(split)
        if not recs:
            continue
        y = np.array([r["y"] for r in recs], dtype=np.int64)
        b = np.array([r["b"] for r in recs], dtype=np.int64)
        maj = np.array([r["maj"] for r in recs], dtype=bool)
        if fmt == "packed":
            x = read_packed(dataset_dir / f"{split}.pack", memmap=memmap)
        else:
            x = np.stack([_load_png(dataset_dir / r["loc"]) for r in recs])
        splits[split] = SplitArrays(x=x, y=y, b=b, maj=maj)
    return LoadedDataset(manifest=manifest, splits=splits)
