"""Exception hierarchy shared by all modules.

Each family maps onto one CLI exit code (see :mod:`samplecnn.cli`).
"""


class SampleCNNError(Exception):
    exit_code = 1


class ConfigError(SampleCNNError, ValueError):
    exit_code = 1


class ShapeError(SampleCNNError, ValueError):
    exit_code = 1


class DataError(SampleCNNError):
    exit_code = 2


class WavFormatError(DataError, ValueError):
    """Malformed RIFF/WAVE container."""


class UnsupportedFormatError(DataError, ValueError):
    """Well-formed WAV whose codec or sample width we do not decode."""


class ManifestError(DataError, ValueError):
    pass


class CheckpointError(SampleCNNError):
    exit_code = 1


class NumericalError(SampleCNNError, ArithmeticError):
    exit_code = 3


class StateError(SampleCNNError, RuntimeError):
    exit_code = 1
