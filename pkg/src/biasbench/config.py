"""Experiment configuration: YAML loading, strict validation, dataset setup.

A config has four sections: ``dataset`` (grid-image spec or synthetic-task
parameters), ``method``, ``train`` and optional ``sweep``/``report``.
Unknown keys are rejected so typos fail loudly.  Datasets are materialized
under the store root, keyed by a hash of their section, and reused.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import yaml

from .data import (
    BiasSpec,
    canonical_factor,
    generate_dataset,
    generate_synthetic_group_task,
    load_dataset,
    load_idx_corpus,
    synthetic_font_corpus,
)
from .data.factors import CANONICAL_FACTORS
from .methods import MethodConfig
from .models import ModelSpec
from .sweep import STAGE1_LRS, STAGE1_WDS, SelectionPolicy, SweepPlan
from .training import DEFAULT_ALPHA_GRID, DEFAULT_BETA_GRID, TrainConfig


class ConfigError(Exception):
    pass


_SECTIONS = {"dataset", "method", "train", "sweep", "report"}
_DATASET_KEYS = {
    "kind", "factors", "cell_size", "split_sizes", "p_bias", "seed", "corpus",
    "format", "num_classes",
    # synthetic_groups:
    "rare_fraction", "correlation", "n", "positive_fraction", "signal_margin",
    "signal_noise", "bias_noise", "noise_dims", "val_fraction", "test_fraction",
}
_METHOD_KEYS = {"tag", "params"}
_TRAIN_KEYS = {
    "epochs", "optimizer", "lr", "weight_decay", "batch_size", "seed",
    "explicit_factors", "model", "alpha_select", "group_sampling",
}
_MODEL_KEYS = {"arch", "channels", "hidden", "coord_channels"}
_SWEEP_KEYS = {"stage1_lrs", "stage1_wds", "stage2", "seeds"}
_REPORT_KEYS = {"alpha_grid", "beta_grid", "alpha_select", "baseline"}


def _check_keys(section: str, mapping: dict, allowed: set) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {sorted(unknown)}")


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    # A bare dataset mapping (as passed to `generate --spec`) is promoted.
    if "dataset" not in cfg and "kind" in cfg:
        cfg = {"dataset": cfg}
    _check_keys("config", cfg, _SECTIONS)
    if "dataset" not in cfg:
        raise ConfigError("config needs a 'dataset' section")
    _check_keys("dataset", cfg["dataset"], _DATASET_KEYS)
    if "method" in cfg:
        _check_keys("method", cfg["method"], _METHOD_KEYS)
    if "train" in cfg:
        _check_keys("train", cfg["train"], _TRAIN_KEYS)
        if "model" in cfg["train"]:
            _check_keys("train.model", cfg["train"]["model"], _MODEL_KEYS)
    if "sweep" in cfg:
        _check_keys("sweep", cfg["sweep"], _SWEEP_KEYS)
    if "report" in cfg:
        _check_keys("report", cfg["report"], _REPORT_KEYS)
    return cfg


def dataset_section_hash(dcfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(dcfg, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


def build_bias_spec(dcfg: dict) -> BiasSpec:
    factor_names = dcfg.get("factors", list(CANONICAL_FACTORS))
    spec = BiasSpec(
        factors=[canonical_factor(n) for n in factor_names],
        seed=dcfg.get("seed", 0),
        split_sizes=dict(dcfg.get("split_sizes", {"train": 20000, "val": 5000, "test": 5000})),
        p_bias=dcfg.get("p_bias", {"train": 0.7, "val": 0.7, "test": 0.1}),
        cell_size=dcfg.get("cell_size", 32),
        num_classes=dcfg.get("num_classes", 10),
    )
    return spec


def _build_corpus(dcfg: dict):
    corpus = dcfg.get("corpus", "synthetic")
    if corpus == "synthetic":
        return synthetic_font_corpus()
    if isinstance(corpus, dict):
        return load_idx_corpus(corpus["images"], corpus["labels"])
    raise ConfigError(f"unknown corpus spec {corpus!r}")


def materialize_dataset(dcfg: dict, store_root, fmt: str | None = None, out_dir=None):
    """Generate (or reuse) the dataset named by a config section.

    Returns ``(dataset_dir, LoadedDataset)``.
    """
    kind = dcfg.get("kind", "biased_mnist")
    if out_dir is None:
        out_dir = Path(store_root) / "datasets" / dataset_section_hash(dcfg)
    out_dir = Path(out_dir)
    if not (out_dir / "manifest.jsonl").exists():
        if kind == "biased_mnist":
            spec = build_bias_spec(dcfg)
            generate_dataset(spec, _build_corpus(dcfg), out_dir, fmt=fmt or dcfg.get("format", "packed"))
        elif kind == "synthetic_groups":
            generate_synthetic_group_task(
                out_dir,
                rare_fraction=dcfg["rare_fraction"],
                correlation=dcfg["correlation"],
                n=dcfg["n"],
                seed=dcfg.get("seed", 0),
                positive_fraction=dcfg.get("positive_fraction", 0.15),
                signal_margin=dcfg.get("signal_margin", 1.0),
                signal_noise=dcfg.get("signal_noise", 1.0),
                bias_noise=dcfg.get("bias_noise", 0.1),
                noise_dims=dcfg.get("noise_dims", 6),
                val_fraction=dcfg.get("val_fraction", 0.2),
                test_fraction=dcfg.get("test_fraction", 0.2),
            )
        else:
            raise ConfigError(f"unknown dataset kind {kind!r}")
    return out_dir, load_dataset(out_dir)


def build_model_spec(tcfg: dict, dataset) -> ModelSpec:
    mcfg = dict(tcfg.get("model", {}))
    arch = mcfg.get("arch", "grid_cnn" if dataset.task == "grid_images" else "mlp")
    spec = ModelSpec(
        arch=arch,
        num_classes=dataset.num_classes,
        coord_channels=mcfg.get("coord_channels", False),
    )
    if "channels" in mcfg:
        spec.channels = list(mcfg["channels"])
    if "hidden" in mcfg:
        spec.hidden = list(mcfg["hidden"])
    if arch == "mlp":
        spec.input_dim = dataset.manifest.header["feature_dim"]
    return spec


def build_train_config(cfg: dict, dataset) -> TrainConfig:
    tcfg = dict(cfg.get("train", {}))
    rcfg = dict(cfg.get("report", {}))
    method = MethodConfig.from_dict(cfg.get("method", {"tag": "StdM"}))
    return TrainConfig(
        method=method,
        model=build_model_spec(tcfg, dataset),
        epochs=tcfg.get("epochs", 5),
        optimizer=tcfg.get("optimizer", "adam"),
        lr=tcfg.get("lr", 1e-3),
        weight_decay=tcfg.get("weight_decay", 1e-5),
        batch_size=tcfg.get("batch_size", 128),
        seed=tcfg.get("seed", 0),
        explicit_factors=list(tcfg.get("explicit_factors", [])),
        alpha_grid=tuple(rcfg.get("alpha_grid", DEFAULT_ALPHA_GRID)),
        beta_grid=tuple(rcfg.get("beta_grid", DEFAULT_BETA_GRID)),
        alpha_select=tcfg.get("alpha_select", 0.0),
        group_sampling=tcfg.get("group_sampling", "uniform"),
    )


def build_sweep_plan(cfg: dict, dataset) -> SweepPlan:
    scfg = dict(cfg.get("sweep", {}))
    rcfg = dict(cfg.get("report", {}))
    base = build_train_config(cfg, dataset)
    return SweepPlan(
        method_tag=base.method.tag,
        base=base,
        stage1_lrs=tuple(scfg.get("stage1_lrs", STAGE1_LRS)),
        stage1_wds=tuple(scfg.get("stage1_wds", STAGE1_WDS)),
        stage2_grid=scfg.get("stage2"),
        seeds=tuple(scfg.get("seeds", (0, 1, 2))),
        policy=SelectionPolicy(alpha_select=rcfg.get("alpha_select", base.alpha_select)),
    )
