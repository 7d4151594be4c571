"""Exception hierarchy shared by every solver in the package."""


class ScaoptError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ScaoptError, ValueError):
    """Invalid parameters detected before any computation starts."""


class DomainError(ScaoptError, ValueError):
    """Argument outside the domain of a primitive (e.g. a negative threshold)."""


class ContractViolation(ScaoptError, RuntimeError):
    """A documented invariant failed at run time.

    The ``invariant`` attribute names the violated property so that the
    command line harness can report it.
    """

    def __init__(self, message, invariant="unspecified"):
        super().__init__(message)
        self.invariant = invariant


class LineSearchError(ScaoptError, RuntimeError):
    """Backtracking exceeded its hard cap."""


class NumericalError(ScaoptError, ArithmeticError):
    """Non-finite intermediate quantities or a failed factorization."""


class OracleError(ScaoptError, RuntimeError):
    """A reference solver failed to reach its tolerance within its cap."""
