"""Exception hierarchy shared by the library and the CLI."""


class AgeSIRSError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(AgeSIRSError, ValueError):
    """Arrays or tables do not fit the grid they are declared on."""


class DomainError(AgeSIRSError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConditioningError(AgeSIRSError, ArithmeticError):
    """A denominator is too close to zero to be trusted."""


class NumericalFailure(AgeSIRSError, ArithmeticError):
    """NaN or overflow appeared during a time march."""


class PositivityFailure(AgeSIRSError, ArithmeticError):
    """A solver produced a negative density beyond rounding."""


class NonConvergenceError(AgeSIRSError, RuntimeError):
    """Picard iteration hit its cap before reaching the tolerance."""

    def __init__(self, message, last_delta=None, deltas=None):
        super().__init__(message)
        self.last_delta = last_delta
        self.deltas = list(deltas or [])


class ScenarioError(AgeSIRSError, ValueError):
    """A scenario file could not be parsed or validated."""
