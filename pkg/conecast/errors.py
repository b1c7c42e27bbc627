"""
Exception hierarchy shared by every conecast module.
"""


class ConecastError(Exception):
    """Base class for all conecast errors."""


# Model definition and validation

class ModelError(ConecastError):
    """A network specification is malformed."""


class ShapeMismatch(ModelError):
    """Layer shapes do not chain, or a tensor has the wrong size."""


class EmptyOutput(ModelError):
    """A convolution collapses a spatial dimension below 1."""


class BadHead(ModelError):
    """Head layers (global_average, dense) are out of order."""


class InvalidLayer(ModelError):
    """A layer carries an impossible parameter (kernel, stride, activation...)."""


class InfeasibleShape(ModelError):
    """Generator ranges cannot produce a valid network."""


# Persistence

class ModelIOError(ConecastError):
    """Reading or writing a model manifest or weight blob failed."""


class FormatError(ModelIOError):
    """Manifest is not a supported conecast manifest."""


class SizeMismatch(ModelIOError):
    """Weight blob length disagrees with the declared tensors."""


class InputFormatError(ConecastError):
    """An input file cannot be decoded into the expected shape."""


# Streaming engine

class EngineError(ConecastError):
    """The streaming engine refused an operation."""


class NonzeroBias(EngineError):
    """Streaming requires every bias to be exactly zero."""


class UnsupportedLayer(EngineError):
    """A layer kind the event scheme cannot express (max-pool, softmax...)."""


class TooManyRows(EngineError):
    """More segments pushed than the input has along the streamed axis."""


class TooManyElements(TooManyRows):
    """More elements pushed than a 1D input has."""


class LengthMismatch(EngineError):
    """A pushed segment has the wrong number of values."""


class NonFiniteInput(EngineError):
    """A pushed segment contains NaN or Inf."""


class NotOneDimensional(EngineError):
    """Element-wise pushing needs an input with a single row."""


class IncompleteInput(EngineError):
    """finalize() called before the whole input was pushed."""


class EngineFinalized(EngineError):
    """The engine was finalized; reset() it before pushing again."""


class WrongStreamAxis(EngineError):
    """Segment pushed along an axis the engine was not built for."""


class InvariantViolation(EngineError):
    """A debug-mode invariant check failed."""


# Metrics

class MetricsError(ConecastError):
    """A metrics computation received unusable data."""


class EmptyTrace(MetricsError):
    """The run trace has no steps."""
