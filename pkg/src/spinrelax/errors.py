"""Exception hierarchy for spinrelax."""


class SpinRelaxError(Exception):
    """Base class for all package errors."""


class InvalidParametersError(SpinRelaxError, ValueError):
    pass


class AmbiguousSteadyStateError(SpinRelaxError):
    """Rate generator has a null space of dimension > 1."""


class ResolutionError(SpinRelaxError, ValueError):
    """Time grid too coarse for the requested dead time."""


class RangeError(SpinRelaxError, IndexError):
    pass


class RankDeficiencyError(SpinRelaxError):
    pass


class FitConvergenceError(SpinRelaxError):
    """Optimizer hit its iteration cap.

    ``best`` holds the best-so-far parameter vector and ``rss`` its residual
    sum of squares, so callers can still report partial results.
    """

    def __init__(self, message, best=None, rss=None):
        super().__init__(message)
        self.best = best
        self.rss = rss


class InvalidScenarioError(SpinRelaxError, ValueError):
    pass


class NotARepresentationError(SpinRelaxError, ValueError):
    pass


class ParseError(SpinRelaxError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UsageError(SpinRelaxError, ValueError):
    pass
