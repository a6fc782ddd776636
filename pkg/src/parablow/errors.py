"""Exception hierarchy shared by every parablow module."""


class ParablowError(Exception):
    """Base class for all errors raised by parablow."""


class InfeasibleResolution(ParablowError):
    pass


class UnsupportedDomain(ParablowError):
    pass


class IndexOutOfRange(ParablowError, IndexError):
    pass


class IncompatibleGrids(ParablowError):
    pass


class GridMismatch(ParablowError):
    pass


class NegativeInput(ParablowError, ValueError):
    pass


class NewtonDivergence(ParablowError):
    """Newton iteration failed; ``time`` is set when raised from a time loop."""

    def __init__(self, message, time=None, residuals=None):
        if time is not None:
            message = f"{message} (at t={time:.6g})"
        super().__init__(message)
        self.time = time
        self.residuals = list(residuals or [])


class NoConvergence(ParablowError):
    pass


class NonMonotoneSequence(ParablowError):
    pass


class BudgetExceeded(ParablowError):
    pass


class InsufficientSamples(ParablowError, ValueError):
    pass


class UnresolvedLayer(ParablowError):
    pass


class GridIncommensurate(ParablowError):
    pass


class SchedulesDisagree(ParablowError):
    pass


class ConfigError(ParablowError):
    """Invalid run configuration; ``field`` and ``line`` locate the problem."""

    def __init__(self, message, field=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.field = field
        self.line = line
