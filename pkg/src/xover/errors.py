"""Exception hierarchy.

The CLI maps these onto exit codes: validation-type errors exit with 1,
computational degeneracies with 2.
"""


class XoverError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(XoverError, ValueError):
    """Input violates a documented precondition."""


class DesignParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedShapeError(ValidationError):
    """Operation is only defined for a particular design shape (e.g. p == t)."""


class ConstructionError(ValidationError):
    """Requested orthogonal array cannot be built by the available constructions."""


class EnumerationSizeError(ValidationError):
    """Exhaustive enumeration would exceed the configured cap."""


class DegeneracyError(XoverError, ArithmeticError):
    exit_code = 2


class EstimabilityError(DegeneracyError):
    """Direct-effect contrasts are not estimable for some response."""


class EstimationError(DegeneracyError):
    """Least-squares fit is more rank deficient than the model's intrinsic aliasing."""
