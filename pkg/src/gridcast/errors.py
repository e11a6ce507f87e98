"""Shared exception types."""


class ConfigurationError(ValueError):
    """A model, filter, or operation was configured with inconsistent shapes or options."""


class InputError(ValueError):
    """Input data violates a precondition (wrong shape, negative speeds, ...)."""


class NumericError(ArithmeticError):
    """Non-finite values were encountered where finite math was required."""


class TrainingDivergenceError(RuntimeError):
    """Optimization produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training loss became non-finite at epoch {epoch}")


class SolverError(RuntimeError):
    """Time integration produced non-finite values."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"solver produced non-finite values at internal step {step}")
