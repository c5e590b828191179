"""Exception hierarchy.

Every error carries the name of the module that raised it so that the
harness can propagate module-tagged diagnostics.
"""

from __future__ import annotations


class ItoMapError(Exception):
    """Base class for all package errors."""

    module = "itomap"

    def __init__(self, message: str, *, module: str | None = None):
        if module is not None:
            self.module = module
        super().__init__(message)

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class ValidationError(ItoMapError, ValueError):
    """Invalid input (malformed spec, out-of-range parameter, bad index)."""


class MomentConditionError(ValidationError):
    """The exponential moment condition on jump laws does not hold."""


class UnsupportedOrderError(ValidationError):
    """Requested polynomial order is outside what is implemented."""


class RefusalError(ItoMapError):
    """A well-formed request that cannot be honoured (e.g. unreachable state)."""


class NumericError(ItoMapError, ArithmeticError):
    """Numerical breakdown, e.g. a Gram matrix that is not PSD."""


class LookAheadError(RefusalError):
    """Estimation and evaluation path sets overlap."""
