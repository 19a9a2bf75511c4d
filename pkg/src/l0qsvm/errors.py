"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: config errors -> 2, data errors -> 3,
convergence failures -> 4.
"""


class L0QsvmError(Exception):
    """Base class for all package errors."""


class InvalidArgument(L0QsvmError, ValueError):
    """A caller-supplied argument violates a documented precondition."""


class DimensionError(InvalidArgument):
    """Shapes or dimensions are incompatible with the requested operation."""


class InvalidData(L0QsvmError, ValueError):
    """Dataset contents are unusable (NaN/Inf, empty, too wide, ...)."""


class InvalidLabel(InvalidData):
    """A label is outside the accepted {-1, +1} (or class set) encoding."""


class ParseError(InvalidData):
    """A text input could not be parsed; carries row/column context."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(L0QsvmError, ValueError):
    """An experiment configuration is inconsistent or incomplete."""


class StratificationError(ConfigError):
    """A class has too few members to stratify into the requested folds."""


class NumericError(L0QsvmError, ArithmeticError):
    """A numerical operation broke down (failed factorization, etc.)."""


class ConvergenceFailure(L0QsvmError, RuntimeError):
    """An iterative solver hit its cap; carries the best iterate found."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class SearchFailure(L0QsvmError, RuntimeError):
    """Every hyperparameter trial failed; carries the trial log."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log if log is not None else []


class VersionError(L0QsvmError, ValueError):
    """A serialized document has an unsupported schema version."""
