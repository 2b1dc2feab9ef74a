"""Exception types raised by the public API."""


class CvsynthError(Exception):
    """Base class for all package errors."""


class ParameterError(CvsynthError):
    """An argument value is invalid (non-finite, wrong parity, out of range)."""


class DimensionError(CvsynthError):
    """Array shapes or axes are incompatible with an operation."""


class ConfigError(ParameterError):
    """A model or CLI configuration violates its invariants."""


class DeterminismError(CvsynthError):
    """Two forward passes of a supposedly deterministic op disagreed."""


class DegenerateBatchError(CvsynthError):
    """A loss was requested over a batch with no contributing entries."""


class DegenerateEvaluationError(CvsynthError):
    """A metric was requested over an empty evaluation mask."""


class GenerationError(CvsynthError):
    """Synthetic scene generation failed to produce a usable sample."""


class TrainingError(CvsynthError):
    """Training diverged (non-finite loss)."""
