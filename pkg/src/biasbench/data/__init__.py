from .factors import BiasSpec, FactorDef, canonical_factor, sample_factor_value, CANONICAL_FACTORS
from .compose import compose_image
from .generate import DatasetManifest, GenerationError, generate_dataset, load_dataset
from .idx import CorpusError, DigitCorpus, load_idx_corpus, synthetic_font_corpus
from .synthetic import generate_synthetic_group_task

__all__ = [
    "BiasSpec",
    "FactorDef",
    "CANONICAL_FACTORS",
    "canonical_factor",
    "sample_factor_value",
    "compose_image",
    "DatasetManifest",
    "GenerationError",
    "generate_dataset",
    "load_dataset",
    "CorpusError",
    "DigitCorpus",
    "load_idx_corpus",
    "synthetic_font_corpus",
    "generate_synthetic_group_task",
]
