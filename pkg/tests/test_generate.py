import numpy as np
import pytest

from biasbench.data import (
    BiasSpec,
    DatasetManifest,
    GenerationError,
    canonical_factor,
    generate_dataset,
    load_dataset,
    synthetic_font_corpus,
)
from biasbench.data.generate import read_packed, write_packed


def small_spec(**kw):
    defaults = dict(
        factors=[canonical_factor("digit_color"), canonical_factor("background_color")],
        seed=11,
        split_sizes={"train": 300, "val": 80, "test": 80},
        p_bias={"train": 0.8, "val": 0.8, "test": 0.1},
        cell_size=16,
    )
    defaults.update(kw)
    return BiasSpec(**defaults)


def test_packed_roundtrip(tmp_path):
    arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    write_packed(tmp_path / "a.pack", arr)
    back = read_packed(tmp_path / "a.pack")
    assert np.array_equal(arr, back)
    f32 = np.linspace(0, 1, 12, dtype=np.float32).reshape(3, 4)
    write_packed(tmp_path / "b.pack", f32)
    assert np.array_equal(read_packed(tmp_path / "b.pack", memmap=False), f32)


def test_generate_counts_and_manifest_roundtrip(tmp_path):
    spec = small_spec()
    manifest = generate_dataset(spec, synthetic_font_corpus(), tmp_path)
    for split, n in spec.split_sizes.items():
        assert len(manifest.split_records(split)) == n
    loaded = DatasetManifest.load(tmp_path / "manifest.jsonl")
    assert loaded == manifest


def test_seeded_determinism(tmp_path):
    spec = small_spec()
    generate_dataset(spec, synthetic_font_corpus(), tmp_path / "a")
    generate_dataset(spec, synthetic_font_corpus(), tmp_path / "b")
    assert (tmp_path / "a/manifest.jsonl").read_bytes() == (tmp_path / "b/manifest.jsonl").read_bytes()
    for split in ("train", "val", "test"):
        assert (tmp_path / f"a/{split}.pack").read_bytes() == (tmp_path / f"b/{split}.pack").read_bytes()


def test_majority_flags_recompute(tmp_path):
    spec = small_spec()
    manifest = generate_dataset(spec, synthetic_font_corpus(), tmp_path)
    for rec in manifest.records:
        expected = [int(v == f.biased_value(rec["y"])) for v, f in zip(rec["b"], spec.factors)]
        assert rec["maj"] == expected


def test_majority_fraction_within_binomial_bound(tmp_path):
    spec = small_spec(split_sizes={"train": 4000, "val": 50, "test": 50}, seed=5)
    manifest = generate_dataset(spec, synthetic_font_corpus(), tmp_path)
    recs = manifest.split_records("train")
    maj = np.array([r["maj"] for r in recs], dtype=float)
    p = 0.8
    bound = 4 * np.sqrt(p * (1 - p) / len(recs))
    for j in range(maj.shape[1]):
        assert abs(maj[:, j].mean() - p) <= bound


def test_factor_independence_given_label(tmp_path):
    spec = small_spec(split_sizes={"train": 6000, "val": 50, "test": 50}, seed=7)
    manifest = generate_dataset(spec, synthetic_font_corpus(), tmp_path)
    recs = manifest.split_records("train")
    y = np.array([r["y"] for r in recs])
    b = np.array([r["b"] for r in recs])
    # conditional correlation of the two factors' majority indicators given y
    for cls in range(10):
        sel = y == cls
        if sel.sum() < 50:
            continue
        a = (b[sel, 0] == cls).astype(float)
        c = (b[sel, 1] == cls).astype(float)
        if a.std() == 0 or c.std() == 0:
            continue
        corr = np.corrcoef(a, c)[0, 1]
        assert abs(corr) < 5 / np.sqrt(sel.sum())


def test_load_dataset_arrays(tmp_path):
    spec = small_spec()
    generate_dataset(spec, synthetic_font_corpus(), tmp_path)
    ds = load_dataset(tmp_path)
    tr = ds.splits["train"]
    assert tr.x.shape == (300, 48, 48, 3) and tr.x.dtype == np.uint8
    assert tr.b.shape == (300, 2) and tr.maj.shape == (300, 2)
    assert ds.factor_names == ["digit_color", "background_color"]
    assert ds.num_classes == 10


def test_png_format_matches_packed(tmp_path):
    spec = small_spec(split_sizes={"train": 20, "val": 5, "test": 5})
    generate_dataset(spec, synthetic_font_corpus(), tmp_path / "packed", fmt="packed")
    generate_dataset(spec, synthetic_font_corpus(), tmp_path / "png", fmt="png")
    a = load_dataset(tmp_path / "packed").splits["train"]
    b = load_dataset(tmp_path / "png").splits["train"]
    assert np.array_equal(np.asarray(a.x), b.x)
    assert (tmp_path / "png/png/train/000000.png").exists()


def test_empty_split_rejected(tmp_path):
    spec = small_spec(split_sizes={"train": 10, "val": 0, "test": 5})
    with pytest.raises(GenerationError, match="size 0"):
        generate_dataset(spec, synthetic_font_corpus(), tmp_path)


def test_without_replacement_requires_enough_glyphs(tmp_path):
    corpus = synthetic_font_corpus()
    corpus.with_replacement = False
    spec = small_spec(split_sizes={"train": 50, "val": 10, "test": 10})
    with pytest.raises(GenerationError, match="too small"):
        generate_dataset(spec, corpus, tmp_path)
