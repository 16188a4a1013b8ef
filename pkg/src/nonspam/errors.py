"""Exception hierarchy for the non-SPAM codec.

Every error raised on purpose by the package derives from NonSpamError, and
each family carries its CLI exit code as `exit_code`.
"""

from typing import Optional


class NonSpamError(Exception):
    """Base class for all codec errors."""

    exit_code = 1


class ValidationError(NonSpamError, ValueError):
    """Bad arguments, parameters or configuration."""

    exit_code = 1


class DomainError(ValidationError):
    """A value lies outside the domain of an operation."""


class DimensionError(ValidationError):
    """Array shapes or grids do not agree."""


class RangeError(ValidationError):
    """A requested time or index lies outside the computed horizon."""


class PrecisionError(ValidationError):
    """The fine time grid is too coarse for the time constants."""


class ScaleGuardError(ValidationError):
    """A dense oracle was requested for a problem too large to hold."""


class ConfigError(ValidationError):
    """The configuration file holds an unknown key or an unparseable value."""


class UsageError(ValidationError):
    """Malformed command-line input."""


class FormatError(NonSpamError, ValueError):
    """A file does not follow the expected format."""

    exit_code = 2

    def __init__(
        self, message: str, offset: Optional[int] = None, path: Optional[str] = None
    ):
        self.offset = offset
        self.path = path
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class UnsupportedFormatError(FormatError):
    """A well-formed file of a kind the codec does not handle (e.g. colour)."""


class NonSpamIOError(NonSpamError, OSError):
    """Reading or writing a file failed."""

    exit_code = 2


class NumericalError(NonSpamError, ArithmeticError):
    """A numerical procedure failed or a numerical contract was violated."""

    exit_code = 3


class NotConvergedError(NumericalError):
    """The temporal weights did not reach their asymptote within the horizon."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (achieved relative residual {residual:.3e})")


class FrameDegeneracyError(NumericalError):
    """The filter family fails the frame condition numerically (alpha <= 0)."""


class IllConditionedFrameError(NumericalError):
    """The aggregate spectrum is too close to zero for an exact dual solve."""


class FrameViolationError(NumericalError):
    """An energy ratio fell outside the frame bounds."""

    def __init__(self, message: str, trial: int):
        self.trial = trial
        super().__init__(f"{message} (trial {trial})")


class ConvergenceWarning(RuntimeWarning):
    """Gradient descent hit max_iters before the gradient tolerance."""
