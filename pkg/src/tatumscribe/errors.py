"""Exception types shared across the package."""


class TatumscribeError(Exception):
    """Base class for all package errors."""


class DimensionError(TatumscribeError, ValueError):
    """Raised when array shapes do not agree."""


class TapeError(TatumscribeError, RuntimeError):
    """Raised on misuse of the gradient tape (detached or consumed graphs)."""


class DomainError(TatumscribeError, ValueError):
    """Raised when values fall outside the domain an operation accepts."""


class OrderingError(TatumscribeError, ValueError):
    """Raised when a time sequence is not sorted as required."""


class InputTooShortError(TatumscribeError, ValueError):
    """Raised when an audio clip is shorter than one analysis window."""


class UnsupportedRateError(TatumscribeError, ValueError):
    """Raised for audio whose sample rate is not 44100 Hz."""


class CoverageError(TatumscribeError, ValueError):
    """Raised when a tatum grid does not overlap the frame range at all."""


class InsufficientDataError(TatumscribeError, ValueError):
    """Raised when a corpus is too small to estimate a model."""


class ConfigError(TatumscribeError, ValueError):
    """Raised for invalid or inconsistent configuration."""


class CheckpointError(TatumscribeError, ValueError):
    """Raised for malformed or missing parameter checkpoints."""


class AlignmentError(TatumscribeError, ValueError):
    """Raised when two tatum-level objects disagree on the number of tatums."""
