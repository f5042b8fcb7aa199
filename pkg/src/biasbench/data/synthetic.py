"""Synthetic four-group vector task: binary label x binary bias indicator.

Mimics the group structure of rare-group face benchmarks without any image
data: a near-noiseless bias feature agrees with the label on a ``correlation``
fraction of samples, a noisier signal feature always carries the label, and
the rarest group's prior is set directly.  Bayes rates of both features are
closed-form, which the tests use as oracles.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.stats import norm

from .generate import DatasetManifest, GenerationError, GENERATOR_VERSION, write_packed


def group_priors(rare_fraction: float, correlation: float, positive_fraction: float = 0.15):
    """Priors over groups (y, b), index g = 2*y + b."""
    if not 0.0 < rare_fraction < 0.5:
        raise ValueError(f"rare_fraction {rare_fraction} outside (0, 0.5)")
    if not 0.5 <= correlation < 1.0:
        raise ValueError(f"correlation {correlation} outside [0.5, 1)")
    p11 = positive_fraction - rare_fraction
    p00 = correlation - p11
    p01 = 1.0 - correlation - rare_fraction
    p10 = rare_fraction
    priors = np.array([p00, p01, p10, p11])
    if (priors <= 0).any():
        raise ValueError(
            f"inconsistent priors {priors.tolist()} for rare_fraction={rare_fraction}, "
            f"correlation={correlation}, positive_fraction={positive_fraction}"
        )
    return priors


def signal_feature_accuracy(signal_margin: float = 1.0, signal_noise: float = 1.0) -> float:
    """Bayes accuracy of a classifier thresholding the signal feature at 0."""
    return float(norm.cdf(signal_margin / signal_noise))


def bias_feature_accuracy(correlation: float, bias_noise: float = 0.1) -> float:
    """Bayes accuracy of a classifier thresholding the bias feature at 0."""
    recover = float(norm.cdf(1.0 / bias_noise))
    return correlation * recover + (1.0 - correlation) * (1.0 - recover)


def _sample_rng(seed: int, split_idx: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, split_idx, index))))


def generate_synthetic_group_task(
    out_dir,
    rare_fraction: float,
    correlation: float,
    n: int,
    seed: int,
    positive_fraction: float = 0.15,
    signal_margin: float = 1.0,
    signal_noise: float = 1.0,
    bias_noise: float = 0.1,
    noise_dims: int = 6,
    val_fraction: float = 0.2,
    test_fraction: float = 0.2,
) -> DatasetManifest:
    """Generate train/val/test splits of the four-group task into ``out_dir``.

    All splits share the same group priors (the bias pattern carries over to
    evaluation, as in the benchmarks this mirrors).
    """
    priors = group_priors(rare_fraction, correlation, positive_fraction)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    params = {
        "rare_fraction": rare_fraction,
        "correlation": correlation,
        "n": n,
        "seed": seed,
        "positive_fraction": positive_fraction,
        "signal_margin": signal_margin,
        "signal_noise": signal_noise,
        "bias_noise": bias_noise,
        "noise_dims": noise_dims,
        "val_fraction": val_fraction,
        "test_fraction": test_fraction,
    }
    header = {
        "kind": "biasbench-manifest",
        "version": 1,
        "task": "vector_groups",
        "params": params,
        "factors": ["bias_indicator"],
        "cardinalities": [2],
        "num_classes": 2,
        "generator_version": GENERATOR_VERSION,
        "format": "packed",
        "feature_dim": 2 + noise_dims,
    }
    manifest = DatasetManifest(header=header)

    sizes = {"train": n, "val": int(round(n * val_fraction)), "test": int(round(n * test_fraction))}
    dim = 2 + noise_dims
    for split_idx, (split, count) in enumerate(sizes.items()):
        if count == 0:
            raise GenerationError(f"split {split!r} has size 0")
        x = np.empty((count, dim), dtype=np.float32)
        groups_seen = set()
        for i in range(count):
            rng = _sample_rng(seed, split_idx, i)
            g = int(rng.choice(4, p=priors))
            y, b = divmod(g, 2)
            groups_seen.add(g)
            signal = signal_margin * (2 * y - 1) + signal_noise * rng.standard_normal()
            bias_feat = (2 * b - 1) + bias_noise * rng.standard_normal()
            noise = rng.standard_normal(noise_dims)
            x[i, 0] = signal
            x[i, 1] = bias_feat
            x[i, 2:] = noise
            manifest.records.append(
                {
                    "split": split,
                    "i": i,
                    "y": y,
                    "b": [b],
                    "maj": [int(b == y)],
                    "loc": f"{split}.pack:{i}",
                }
            )
        if len(groups_seen) < 4:
            raise GenerationError(
                f"split {split!r} of size {count} did not populate all 4 groups"
            )
        write_packed(out_dir / f"{split}.pack", x)

    manifest.save(out_dir / "manifest.jsonl")
    return manifest
