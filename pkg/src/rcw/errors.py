"""Exception hierarchy shared across the package."""

from __future__ import annotations


class RcwError(Exception):
    """Base class for all package-specific errors."""


class IntegrityError(RcwError):
    """A structure references data its host graph does not contain."""


class ParameterError(RcwError):
    """An argument is out of range or otherwise unusable."""


class BudgetError(RcwError):
    """A disturbance violates its global or per-node budget."""


class CapacityError(RcwError):
    """An enumeration would exceed the configured instance-size guard."""


class ModelCompatError(RcwError):
    """Model and graph dimensions, or model kind and operation, do not match."""


class ChecksumMismatch(IntegrityError):
    """A witness or disturbance was built against a different host graph."""


class NumericalError(RcwError):
    """An iterative solver failed to converge; carries the final residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class WorkerFailure(RcwError):
    """A parallel worker died; carries a partial-state diagnostic."""
