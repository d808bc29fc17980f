"""Exception hierarchy.

Two families: ``ValidationError`` for bad input (CLI exit code 2) and
``NumericalError`` for computations that could not be carried out reliably
(CLI exit code 3).
"""


class PolymerChainError(Exception):
    """Base class for all package errors."""


class ValidationError(PolymerChainError, ValueError):
    """Input rejected before any computation."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ParseError(ValidationError):
    """Malformed configuration text."""


class InvalidEnsemble(ValidationError):
    pass


class InvalidPolymer(ValidationError):
    pass


class DegenerateOperator(ValidationError):
    pass


class NoCriticalEnergy(ValidationError):
    pass


class NotCritical(ValidationError):
    pass


class AnomalousAngles(ValidationError):
    pass


class ExpansionRangeError(ValidationError):
    pass


class InsufficientConfiguration(ValidationError):
    pass


class NumericalError(PolymerChainError, ArithmeticError):
    """A computation failed or lost accuracy."""


class NumericalOverflow(NumericalError):
    pass


class SingularTransfer(NumericalError):
    pass


class DegenerateFrame(NumericalError):
    pass


class OrderUndetermined(NumericalError):
    pass


class NotAnEigenvalue(NumericalError):
    pass


class SolverFailure(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class FrontEscape(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class InsufficientWindow(InsufficientConfiguration):
    pass


class InsufficientRange(ValidationError):
    pass


class SingularSystem(NumericalError):
    pass


class QuadratureUnderResolved(QuadratureFailure):
    pass


class SchemaMismatch(ValidationError):
    """A CSV file does not have the columns a plot kind needs."""
