"""Exception types raised by the pricing and hedging pipelines."""


class ValidationError(ValueError):
    """Invalid contract, model or configuration parameter.

    ``field`` names the offending parameter so front ends can report it.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ToleranceError(ArithmeticError):
    """A numerical identity or tolerance check failed."""


class QuadratureError(ToleranceError):
    """Quadrature did not reach the requested accuracy."""

    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class BoundaryConditionError(ToleranceError):
    """Smoothness or boundary condition violated during a backward step."""

    def __init__(self, message, step=None, report=None):
        super().__init__(message)
        self.step = step
        self.report = report
