"""Training objectives: configuration, defaults and driver construction.

Eight objectives are available.  Five consume explicit bias-factor labels
(group upweighting, worst-group optimization, two-branch fusion, adversarial
factor removal, environment-invariance penalty); the baseline and the two
implicit ones (failure-driven reweighting, output decay) do not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import drivers
from .gdro import GdroState, gdro_step, group_mean_losses
from .irm import irmv1_penalty
from .lnl import FactorHeads, grad_reverse, lnl_losses
from .losses import (
    gce_loss,
    gce_loss_from_logits,
    lff_weights,
    rubi_combine,
    rubi_losses,
    sd_penalty,
    softmax_entropy,
    stdm_loss,
    upweighted_loss,
)

METHOD_TAGS = ("StdM", "UpWt", "GDRO", "RUBi", "LNL", "IRMv1", "LFF", "SD")

# Per-method: stage-1 defaults, stage-2 search grid, neutral (off-switch)
# parameters, and whether the objective consumes explicit factor labels.
_REGISTRY = {
    "StdM": {
        "explicit": False,
        "stage1": {},
        "stage2": {},
        "neutral": {},
    },
    "UpWt": {
        "explicit": True,
        "stage1": {},
        "stage2": {},
        "neutral": {},
    },
    "GDRO": {
        "explicit": True,
        "stage1": {"eta": 0.01},
        "stage2": {"eta": [0.001, 0.01, 0.1]},
        "neutral": {"eta": 0.0},
    },
    "RUBi": {
        "explicit": True,
        "stage1": {},
        "stage2": {},
        "neutral": None,  # structurally two-branch; no scalar off-switch
    },
    "LNL": {
        "explicit": True,
        "stage1": {"lambda_grad": -0.1, "lambda_ent": 0.01},
        "stage2": {"lambda_grad": [-1.0, -0.1, -0.01], "lambda_ent": [1.0, 0.1, 0.01, 0.0]},
        "neutral": {"lambda_grad": 0.0, "lambda_ent": 0.0},
    },
    "IRMv1": {
        "explicit": True,
        "stage1": {"lam": 1.0, "envs_per_batch": 16},
        "stage2": {"lam": [1.0, 10.0, 100.0, 1000.0, 10000.0]},
        "neutral": {"lam": 0.0, "envs_per_batch": 16},
    },
    "LFF": {
        "explicit": False,
        "stage1": {"gamma": 0.7},
        "stage2": {"gamma": [0.1, 0.3, 0.5, 0.7, 0.9]},
        "neutral": None,  # equal-branch weights are the neutral point
    },
    "SD": {
        "explicit": False,
        "stage1": {"lam": 1e-3, "gamma": 1e-3},
        "stage2": {"lam": [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0],
                   "gamma": [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0]},
        "neutral": {"lam": 0.0, "gamma": 0.0},
    },
}


@dataclass
class MethodConfig:
    """Selected objective plus its hyperparameters."""

    tag: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in _REGISTRY:
            raise ValueError(f"unknown method {self.tag!r}; expected one of {METHOD_TAGS}")
        merged = dict(_REGISTRY[self.tag]["stage1"])
        merged.update(self.params)
        self.params = merged
        self._validate()

    def _validate(self):
        p = self.params
        if self.tag == "GDRO" and p["eta"] < 0:
            raise ValueError("GDRO step size must be >= 0")
        if self.tag == "LNL":
            if p["lambda_grad"] > 0:
                raise ValueError("gradient reversal weight must be <= 0")
            if p["lambda_ent"] < 0:
                raise ValueError("entropy weight must be >= 0")
        if self.tag == "IRMv1":
            if p["lam"] < 0:
                raise ValueError("penalty weight must be >= 0")
            if int(p["envs_per_batch"]) < 1:
                raise ValueError("environments per batch must be >= 1")
        if self.tag == "LFF" and not 0.0 < p["gamma"] <= 1.0:
            raise ValueError("amplification gamma must lie in (0, 1]")
        if self.tag == "SD":
            lam = p["lam"]
            for v in lam if isinstance(lam, (list, tuple)) else [lam]:
                if v < 0:
                    raise ValueError("output decay weight must be >= 0")

    @property
    def explicit(self) -> bool:
        return _REGISTRY[self.tag]["explicit"]

    def to_dict(self) -> dict:
        return {"tag": self.tag, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "MethodConfig":
        return cls(tag=d["tag"], params=dict(d.get("params", {})))

    @classmethod
    def neutral(cls, tag: str) -> "MethodConfig | None":
        neutral = _REGISTRY[tag]["neutral"]
        if neutral is None:
            return None
        return cls(tag=tag, params=dict(neutral))

    @classmethod
    def stage2_grid(cls, tag: str) -> dict:
        return {k: list(v) for k, v in _REGISTRY[tag]["stage2"].items()}


def build_driver(config: MethodConfig) -> drivers.MethodDriver:
    p = config.params
    if config.tag == "StdM":
        return drivers.StdmDriver()
    if config.tag == "UpWt":
        return drivers.UpWtDriver()
    if config.tag == "GDRO":
        return drivers.GdroDriver(eta=p["eta"])
    if config.tag == "RUBi":
        return drivers.RubiDriver()
    if config.tag == "LNL":
        return drivers.LnlDriver(lambda_grad=p["lambda_grad"], lambda_ent=p["lambda_ent"])
    if config.tag == "IRMv1":
        return drivers.IrmDriver(lam=p["lam"], envs_per_batch=int(p["envs_per_batch"]))
    if config.tag == "LFF":
        return drivers.LffDriver(gamma=p["gamma"])
    if config.tag == "SD":
        return drivers.SdDriver(lam=p["lam"], gamma=p["gamma"])
    raise ValueError(config.tag)  # pragma: no cover


__all__ = [
    "METHOD_TAGS",
    "MethodConfig",
    "build_driver",
    "GdroState",
    "gdro_step",
    "group_mean_losses",
    "irmv1_penalty",
    "FactorHeads",
    "grad_reverse",
    "lnl_losses",
    "gce_loss",
    "gce_loss_from_logits",
    "lff_weights",
    "rubi_combine",
    "rubi_losses",
    "sd_penalty",
    "softmax_entropy",
    "stdm_loss",
    "upweighted_loss",
]
