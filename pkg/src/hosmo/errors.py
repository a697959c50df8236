"""Exception hierarchy.

Every error raised by the library derives from :class:`HosmoError`.  The two
intermediate classes decide the CLI exit code: validation problems (bad input,
violated preconditions) exit with 2, numerical failures with 3.
"""

from __future__ import annotations


class HosmoError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ValidationError(HosmoError):
    exit_code = 2


class NumericalError(HosmoError):
    exit_code = 3


class ParseError(ValidationError):
    """Malformed JSON or a schema violation in an input file."""


class DimensionError(ValidationError):
    """Matrix dimensions are inconsistent."""


class DegenerateDimensionsError(ValidationError):
    """More unknown inputs than outputs; strong observability is impossible."""


class NotStronglyObservableError(ValidationError):
    """The system has an invariant zero (or is not observable).

    ``witness`` holds a complex frequency at which the Rosenbrock matrix
    loses rank, when one is known.
    """

    def __init__(self, message: str, witness: complex | None = None):
        super().__init__(message)
        self.witness = witness


class UnsupportedOrderError(ValidationError):
    """Default gains are only tabulated up to subsystem order 6."""


class UnsupportedMultiInputError(ValidationError):
    """Input reconstruction by augmentation needs a scalar unknown input."""


class InconsistentSystemError(NumericalError):
    """A right-hand side is not in the row space of the coefficient matrix."""


class SingularMatrixError(NumericalError):
    """A matrix that must be invertible is numerically singular."""


class SingularObservabilityError(SingularMatrixError):
    """The reduced observability matrix is numerically singular."""


class NonConvergenceError(NumericalError):
    """An iteration exceeded its defensive round limit."""


class StructuralValidationError(NumericalError):
    """A transformed system does not exhibit the observer normal form."""

    def __init__(self, message: str, max_violation: float = 0.0):
        super().__init__(message)
        self.max_violation = max_violation


class DivergedError(NumericalError):
    """A simulated state left the representable range."""
