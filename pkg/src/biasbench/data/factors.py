"""Bias-factor declarations and the factor-value sampling rule.

A dataset is described by a :class:`BiasSpec`: an ordered list of factors,
per-split sizes and per-split bias levels.  Every factor is spuriously
correlated with the class label: with probability ``p_bias`` a sample takes
the factor value aligned with its label, otherwise one of the remaining
values uniformly at random.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CANONICAL_FACTORS = (
    "background_color",
    "digit_color",
    "digit_position",
    "distractor_shape",
    "distractor_color",
    "texture_type",
    "texture_color",
)

SPLITS = ("train", "val", "test")

DEFAULT_P_BIAS = {"train": 0.7, "val": 0.7, "test": 0.1}


@dataclass(frozen=True)
class FactorDef:
    """One bias variable: its name, cardinality and class-aligned value map.

    The class-aligned ("majority") value for label ``y`` is simply index
    ``y % cardinality``: the identity for ten-valued factors, wrap-around
    for the nine-celled digit position.
    """

    name: str
    cardinality: int

    def __post_init__(self):
        if self.cardinality < 2:
            raise ValueError(f"factor {self.name!r}: cardinality must be >= 2")

    def biased_value(self, y: int) -> int:
        return y % self.cardinality


def canonical_factor(name: str) -> FactorDef:
    if name not in CANONICAL_FACTORS:
        raise ValueError(f"unknown factor {name!r}; expected one of {CANONICAL_FACTORS}")
    cardinality = 9 if name == "digit_position" else 10
    return FactorDef(name=name, cardinality=cardinality)


@dataclass
class BiasSpec:
    """Declarative description of a grid-image dataset.

    ``p_bias`` maps split name to either a single probability (applied to
    every factor) or a per-factor map.  ``cell_size`` controls rendering
    resolution: images are 3*cell_size pixels square.
    """

    factors: list[FactorDef] = field(
        default_factory=lambda: [canonical_factor(n) for n in CANONICAL_FACTORS]
    )
    seed: int = 0
    split_sizes: dict[str, int] = field(
        default_factory=lambda: {"train": 20000, "val": 5000, "test": 5000}
    )
    p_bias: dict = field(default_factory=lambda: dict(DEFAULT_P_BIAS))
    cell_size: int = 32
    num_classes: int = 10

    def __post_init__(self):
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate factor names: {names}")
        for split in self.split_sizes:
            if split not in SPLITS:
                raise ValueError(f"unknown split {split!r}")
        for split, sizes in self.split_sizes.items():
            if sizes < 0:
                raise ValueError(f"split {split!r}: negative size")
        for split in SPLITS:
            for f in self.factors:
                p = self.factor_p_bias(split, f.name)
                if not 0.0 <= p <= 1.0:
                    raise ValueError(
                        f"p_bias for factor {f.name!r} in split {split!r} is {p}, "
                        "outside [0, 1]"
                    )
        if self.cell_size < 8:
            raise ValueError("cell_size must be >= 8")

    def factor_names(self) -> list[str]:
        return [f.name for f in self.factors]

    def factor(self, name: str) -> FactorDef:
        for f in self.factors:
            if f.name == name:
                return f
        raise KeyError(name)

    def factor_p_bias(self, split: str, factor_name: str) -> float:
        """Bias level of one factor in one split (scalar spec applies to all)."""
        entry = self.p_bias.get(split, DEFAULT_P_BIAS[split])
        if isinstance(entry, dict):
            return float(entry.get(factor_name, DEFAULT_P_BIAS[split]))
        return float(entry)

    @property
    def image_size(self) -> int:
        return 3 * self.cell_size

    def to_dict(self) -> dict:
        return {
            "factors": [{"name": f.name, "cardinality": f.cardinality} for f in self.factors],
            "seed": self.seed,
            "split_sizes": dict(self.split_sizes),
            "p_bias": {k: (dict(v) if isinstance(v, dict) else v) for k, v in self.p_bias.items()},
            "cell_size": self.cell_size,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BiasSpec":
        factors = [FactorDef(name=f["name"], cardinality=f["cardinality"]) for f in d["factors"]]
        return cls(
            factors=factors,
            seed=d.get("seed", 0),
            split_sizes=dict(d.get("split_sizes", {"train": 20000, "val": 5000, "test": 5000})),
            p_bias={k: (dict(v) if isinstance(v, dict) else v) for k, v in d.get("p_bias", dict(DEFAULT_P_BIAS)).items()},
            cell_size=d.get("cell_size", 32),
            num_classes=d.get("num_classes", 10),
        )


def sample_factor_value(y: int, factor: FactorDef, p_bias: float, rng: np.random.Generator) -> int:
    """Draw one factor value for a sample of class ``y``.

    Returns the class-aligned value with probability ``p_bias``; otherwise
    one of the remaining ``cardinality - 1`` values, each equally likely.
    """
    aligned = factor.biased_value(y)
    if rng.random() < p_bias:
        return aligned
    other = int(rng.integers(factor.cardinality - 1))
    return other if other < aligned else other + 1


def is_majority(y: int, values, factors: list[FactorDef]) -> list[bool]:
    """Per-factor flags: does the drawn value equal the class-aligned one."""
    return [int(v) == f.biased_value(y) for v, f in zip(values, factors)]
