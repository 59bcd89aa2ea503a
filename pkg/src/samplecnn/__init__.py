"""Sample-level 1D CNNs for music auto-tagging on raw waveforms, in numpy."""

from .errors import (CheckpointError, ConfigError, DataError, NumericalError, SampleCNNError,
                     ShapeError, StateError)
from .model import ModelSpec, Network, count_params, parse_shorthand

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ConfigError", "DataError", "ModelSpec", "Network", "NumericalError",
    "SampleCNNError", "ShapeError", "StateError", "count_params", "parse_shorthand",
]
