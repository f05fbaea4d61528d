"""Exception and warning types shared across the package."""

from __future__ import annotations


class HawkesLimError(Exception):
    """Base class for all package-specific errors."""


class InvalidKernelError(HawkesLimError):
    """Kernel evaluation produced a non-finite value or violated a declared bound."""


class AssumptionViolationError(HawkesLimError):
    """A declared model constant is contradicted by probed values.

    Carries the witness pair that produced the violation.
    """

    def __init__(self, message: str, witness: tuple | None = None):
        super().__init__(message)
        self.witness = witness


class ExplosionGuardError(HawkesLimError):
    """Simulated event count exceeded the configured guard."""


class InternalLogicError(HawkesLimError):
    """An internal consistency check failed; indicates a bug, not bad input."""


class DivergenceError(HawkesLimError):
    """Fixed-point iteration failed to reach tolerance.

    Carries the last sup-norm residual.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ModelViolationError(HawkesLimError):
    """The model produced values outside its admissible range (e.g. negative rate)."""


class CapabilityError(HawkesLimError):
    """A required ingredient (derivative, closed form) is unavailable for this model."""


class DomainError(HawkesLimError, ValueError):
    """Arguments outside the mathematical domain of an operation."""


class ConfigurationError(HawkesLimError):
    """Runtime parameters are inconsistent or below required minimums."""


class SchemaError(HawkesLimError):
    """A config file violates the schema; message names the offending field."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ConstraintError(HawkesLimError):
    """Optimizer constraint is infeasible or could not be satisfied."""


class StagnationError(HawkesLimError):
    """Line search stopped making progress before reaching tolerance.

    Carries the best iterate found so far.
    """

    def __init__(
        self,
        message: str,
        best_path=None,
        best_value: float | None = None,
        grad_norm: float | None = None,
        iterations: int | None = None,
    ):
        super().__init__(message)
        self.best_path = best_path
        self.best_value = best_value
        self.grad_norm = grad_norm
        self.iterations = iterations


class DegenerateEstimateWarning(UserWarning):
    """A tail estimate came back all-zero; replicas are insufficient for the event."""


class UnstableISWarning(UserWarning):
    """Importance-sampling weights have very high relative variance."""
