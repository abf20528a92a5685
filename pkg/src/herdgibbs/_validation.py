"""Exception types and small input-checking helpers shared across modules."""

import numpy as np


class ContractViolation(ValueError):
    """Raised when an input breaks a documented precondition."""


class NumericalError(ArithmeticError):
    """Raised when a computation produces an unusable numerical result."""


class OptimizationError(NumericalError):
    """Raised when the local optimizer meets a non-finite objective.

    ``point`` holds the offending argument and ``context`` an optional
    location (step, sweep, coordinate) attached by the caller.
    """

    def __init__(self, message, point=None, context=None):
        super().__init__(message)
        self.point = None if point is None else np.array(point, dtype=float)
        self.context = dict(context or {})

    def __str__(self):
        msg = super().__str__()
        if self.context:
            where = ", ".join(f"{k}={v}" for k, v in self.context.items())
            msg = f"{msg} ({where})"
        return msg


def check_vector(x, length=None, name="x"):
    """Return ``x`` as a finite 1-d float array, optionally of fixed length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ContractViolation(f"{name} must be a vector, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ContractViolation(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return arr


def check_points(X, dim, name="X"):
    """Return ``X`` as a finite (n, dim) array; a single vector becomes one row."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ContractViolation(f"{name} must have shape (n, {dim}), got {np.shape(X)}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return arr


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ContractViolation(f"{name} must be a positive finite number, got {value}")
    return value
