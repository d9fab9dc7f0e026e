"""Exception hierarchy shared by every module."""


class TokenSpectrumError(Exception):
    """Base class for all package errors."""


class ConfigError(TokenSpectrumError, ValueError):
    """Invalid model or experiment configuration."""


class InputError(TokenSpectrumError, ValueError):
    """Malformed input: bad token ids, non-probability rows, overlength sequences."""


class DegenerateError(TokenSpectrumError, ValueError):
    """A quantity is undefined for the given input (zero denominator, zero mass)."""


class PartitionError(DegenerateError):
    """Response too short for the requested within-response partition."""


class AlignmentError(InputError):
    """Attention capture does not cover the requested response window."""


class EncodingError(InputError):
    """Text contains a symbol outside the vocabulary."""


class CheckpointError(TokenSpectrumError):
    """Checkpoint cannot be loaded or does not match the config."""
