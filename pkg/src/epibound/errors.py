"""Exception hierarchy shared by all modules."""


class EpiboundError(Exception):
    """Base class for all errors raised by the package."""


class ValidationError(EpiboundError, ValueError):
    """Input data violates a documented invariant."""


class PreconditionError(EpiboundError, ValueError):
    """An operation was called on input it does not support."""


class CapacityError(EpiboundError):
    """The exact state space would exceed the configured node cap."""


class ConvergenceError(EpiboundError, RuntimeError):
    """An iterative method stopped before reaching its tolerance."""

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history if history is not None else []


class IntegrationError(EpiboundError, RuntimeError):
    """The ODE integrator could not advance (step size underflow)."""

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class NumericalError(EpiboundError, ArithmeticError):
    """A right-hand side produced NaN or Inf."""


class ClosureContractError(EpiboundError, ValueError):
    """A closure produced values outside the range an algorithm relies on."""
