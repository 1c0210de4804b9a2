"""Exception types raised across the package.

Every failure mode that callers are expected to handle gets its own class
so that CLI and test code can match on type instead of message text.
"""


class ThinFilmError(Exception):
    """Base class for all package-specific errors."""


class NonZeroMeanError(ThinFilmError):
    """An operation requiring a mean-zero field received one with a mean."""


class InvalidCoefficientsError(ThinFilmError):
    """Operator or scheme coefficients violate their admissible range."""


class GridTooLargeError(ThinFilmError):
    """A dense-matrix oracle was requested on a grid beyond its size cap."""


class NonPositiveFieldError(ThinFilmError):
    """A field that must be strictly positive has a zero/negative entry."""


class MissingHistoryError(ThinFilmError):
    """A two-step scheme was asked to step without a previous state."""


class PositivityLostError(ThinFilmError):
    """A produced field lost strict positivity (should not happen)."""


class SolverDivergedError(ThinFilmError):
    """A time step failed because the nonlinear solve did not converge."""


class MaxItersExceededError(ThinFilmError):
    """Iteration budget exhausted.  Carries the best iterate found so far."""

    def __init__(self, message, phi=None, trace=None):
        super().__init__(message)
        self.phi = phi
        self.trace = trace


class BarrierCollapseError(ThinFilmError):
    """Line search interval shrank to nothing while still downhill."""


class InsufficientDataError(ThinFilmError):
    """Not enough samples in the requested window to perform a fit."""


class NonPositiveValueError(ThinFilmError):
    """A fit in log coordinates received a non-positive value."""


class ConfigError(ThinFilmError):
    """Bad CLI/config input: unknown key, unparsable value, bad combination."""


class FormatError(ThinFilmError):
    """A file does not conform to the expected on-disk format."""


class UnfinishedError(ThinFilmError):
    """A long run hit its wall-clock budget.  Carries partial results."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
