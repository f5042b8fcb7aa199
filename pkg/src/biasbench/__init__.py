"""biasbench: procedural multi-bias image benchmarks, eight debiasing
objectives, and group-parameterized evaluation with tuning-distribution-
controlled model selection."""

__version__ = "0.1.0"

from .data import BiasSpec, FactorDef, compose_image, generate_dataset, load_dataset
from .groups import GroupTable, assign_groups
from .methods import MethodConfig, build_driver
from .metrics import EvalReport, acc_alpha, iosm, mmd, tail_accuracy
from .models import ModelSpec, build_model
from .training import TrainConfig, TrialRecord, evaluate, train

__all__ = [
    "__version__",
    "BiasSpec",
    "FactorDef",
    "compose_image",
    "generate_dataset",
    "load_dataset",
    "GroupTable",
    "assign_groups",
    "MethodConfig",
    "build_driver",
    "EvalReport",
    "acc_alpha",
    "iosm",
    "mmd",
    "tail_accuracy",
    "ModelSpec",
    "build_model",
    "TrainConfig",
    "TrialRecord",
    "evaluate",
    "train",
]
