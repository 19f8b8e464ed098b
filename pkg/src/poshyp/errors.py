"""Exception types raised by the solvers and analyzers."""


class PoshypError(Exception):
    """Base class for all package errors."""


class PositivityViolation(PoshypError):
    """A positivity-mode criterion was applied to data with negative entries."""


class NonConvergence(PoshypError):
    pass


class CFLViolation(PoshypError):
    pass


class HistoryGap(PoshypError):
    """The supplied history does not cover the delay window [-1, 0]."""


class RootOnBoundary(PoshypError):
    """A characteristic root lies (numerically) on the search contour."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class SingularResolvent(PoshypError):
    pass


class InsufficientData(PoshypError):
    pass


class ConfigError(PoshypError):
    """Malformed experiment configuration; ``field`` and ``line`` locate the problem."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line

    def __str__(self):
        loc = []
        if self.line is not None:
            loc.append(f"line {self.line}")
        if self.field is not None:
            loc.append(f"field '{self.field}'")
        msg = super().__str__()
        return f"{', '.join(loc)}: {msg}" if loc else msg
