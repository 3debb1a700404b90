from .data import (
    DEFAULT_MAX_LEN,
    DEFAULT_STOP_COUNT,
    OOV_ID,
    Dataset,
    Instance,
    Vocabulary,
    build_dataset,
    load_dataset,
    save_dataset,
    tokenize,
)
from .oracle import OracleRuleSet, generate_oracle
from .synthetic import SyntheticConfig, generate_synthetic, load_synthetic_config

__all__ = [
    "DEFAULT_MAX_LEN",
    "DEFAULT_STOP_COUNT",
    "OOV_ID",
    "Dataset",
    "Instance",
    "Vocabulary",
    "build_dataset",
    "load_dataset",
    "save_dataset",
    "tokenize",
    "OracleRuleSet",
    "generate_oracle",
    "SyntheticConfig",
    "generate_synthetic",
    "load_synthetic_config",
]
