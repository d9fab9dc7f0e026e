"""Token-level analysis and selection tools for RL with verifiable rewards on a tiny transformer."""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config
from .entropy import entropy_record, normalized_entropy, raw_entropy
from .exceptions import (
    AlignmentError,
    CheckpointError,
    ConfigError,
    DegenerateError,
    EncodingError,
    InputError,
    PartitionError,
    TokenSpectrumError,
)
from .weighting import TokenWeighter

__all__ = [
    "__version__",
    "AlignmentError",
    "CheckpointError",
    "ConfigError",
    "DegenerateError",
    "EncodingError",
    "ExperimentConfig",
    "InputError",
    "PartitionError",
    "TokenSpectrumError",
    "TokenWeighter",
    "entropy_record",
    "load_config",
    "normalized_entropy",
    "raw_entropy",
]
