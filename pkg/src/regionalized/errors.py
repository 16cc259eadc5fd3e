"""Exception hierarchy shared by every module of the package."""


class RegionalizedError(Exception):
    """Base class for all errors raised by :mod:`regionalized`."""


class CycleError(RegionalizedError, ValueError):
    """The order relation has a cycle between distinct elements."""

    def __init__(self, message, cycle=()):
        super().__init__(message)
        self.cycle = tuple(cycle)


class UnknownElementError(RegionalizedError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NotComparableError(RegionalizedError, ValueError):
    pass


class ShapeError(RegionalizedError, ValueError):
    pass


class FunctorialityError(RegionalizedError, ValueError):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class DomainError(RegionalizedError, ValueError):
    pass


class MissingInverseError(RegionalizedError, NotImplementedError):
    pass


class NumericalOverflowError(RegionalizedError, FloatingPointError):
    pass


class SingularSystemError(RegionalizedError, ArithmeticError):
    pass


class SizeError(RegionalizedError, ValueError):
    pass


class UnboundedProblemError(RegionalizedError, ArithmeticError):
    """Descent left every bounded region: the loss is not bounded below."""


class ParseError(RegionalizedError, ValueError):
    pass


class ValidationError(RegionalizedError, ValueError):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)
