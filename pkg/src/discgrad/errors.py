"""Exception hierarchy shared by every module of the package."""


class DiscGradError(Exception):
    """Base class for all errors raised by discgrad."""


class InvalidParameter(DiscGradError, ValueError):
    pass


class NumericalFault(DiscGradError, ArithmeticError):
    """A field or gradient evaluation produced NaN or Inf."""


class UnsupportedIntegral(DiscGradError):
    """The requested construction needs a quadratic first integral."""


class DegenerateGradient(DiscGradError):
    """|i(x)| vanished where a nonzero gradient is required."""


class StepRejected(DiscGradError):
    """The step size is too large for the requested step map.

    ``reason`` names the failed criterion (currently only ``"denominator"``),
    ``denom`` carries the offending value and ``floor`` the bound it missed.
    """

    def __init__(self, message, *, reason="denominator", denom=None, floor=None):
        super().__init__(message)
        self.reason = reason
        self.denom = denom
        self.floor = floor


class NonConvergence(DiscGradError):
    def __init__(self, message, *, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularStep(DiscGradError):
    """The linear system of a linearly implicit step is numerically singular."""


class ReferenceUnresolved(DiscGradError):
    """Fine-step reference failed its Richardson check after all refinements."""
