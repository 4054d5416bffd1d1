"""Exception hierarchy shared across the package."""


class SwwlError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SwwlError):
    """A dataset file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(SwwlError):
    """Records within one dataset disagree on dimensions or targets."""


class ValidationError(SwwlError):
    """A graph or record violates a structural invariant."""


class ShapeError(SwwlError):
    """An array argument has the wrong shape."""


class EmptyInputError(SwwlError):
    """An operation received an empty sample."""


class DimensionMismatchError(SwwlError):
    """Projection directions and measure support live in different spaces."""


class ConfigMismatchError(SwwlError):
    """Artifacts built under different configurations were combined."""


class SizeMismatchError(SwwlError):
    """Two measures were expected to have equal support sizes."""


class TooLargeError(SwwlError):
    """An exact brute-force routine was asked to exceed its size limit."""


class LengthMismatchError(SwwlError):
    """Sequences that must be aligned have different lengths."""


class DegenerateDrawError(SwwlError):
    """Repeated Gaussian draws failed to produce a usable direction."""


class NonSymmetricError(SwwlError):
    """A matrix expected to be symmetric is not."""


class CholeskyError(SwwlError):
    """A correlation matrix could not be factorized."""


class OptimizationError(SwwlError):
    """Hyperparameter optimization failed for every start."""


class ConstantTargetError(SwwlError):
    """All training targets are identical; the variance estimate degenerates."""
