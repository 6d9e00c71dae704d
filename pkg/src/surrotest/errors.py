"""Exception hierarchy shared across the package.

Every error raised by the library is one of these, so callers (and the CLI)
can categorize failures without string matching.
"""


class SurrotestError(Exception):
    """Base class for all package errors."""


class ParameterError(SurrotestError, ValueError):
    """A parameter is out of its valid range or otherwise unusable."""


class LengthError(SurrotestError, ValueError):
    """An input series or curve has an invalid length."""


class ParseError(SurrotestError, ValueError):
    """A text record could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class SplitError(SurrotestError, ValueError):
    """A dataset is too small to split into train/validation/test."""


class NormalizationError(SurrotestError, ValueError):
    """A quantity that must be nonzero for normalization is zero."""


class DivergenceError(SurrotestError, RuntimeError):
    """A trajectory escaped to non-finite or absurdly large values."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class StiffnessError(SurrotestError, RuntimeError):
    """The adaptive integrator drove the step size below its floor."""


class NumericError(SurrotestError, RuntimeError):
    """A non-finite value appeared where finite arithmetic was required."""


class TrainingError(SurrotestError, RuntimeError):
    """Model training failed; carries the offending epoch when known."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
