from __future__ import annotations

from typing import Any


class KernelError(ValueError):
    """Raised when a kernel or weight matrix violates its construction invariants."""


class DimensionMismatchError(ValueError):
    """Raised when two operands live on different type sets or vertex counts."""

    def __init__(self, message: str, *, expected: int, got: int):
        super().__init__(message)
        self.expected = expected
        self.got = got


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a transformation."""


class GraphError(ValueError):
    """Raised when an edge list violates the graph invariants (range, loops, duplicates)."""


class DataFileError(RuntimeError):
    """Raised when a kernel, matrix, graph or report file cannot be read or written."""

    def __init__(self, message: str, *, path: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class NotPrimeError(ValueError):
    """Raised when a finite-field construction receives a non-prime order."""

    def __init__(self, q: int):
        super().__init__(f"q={q} is not prime; only prime fields are supported")
        self.q = q


class NegativeKernelError(ValueError):
    """Raised when a perturbed kernel k + eps * P has a negative entry."""

    def __init__(self, eps: float, min_value: float):
        super().__init__(f"k + eps*P is negative at eps={eps} (min entry {min_value:.6g})")
        self.eps = eps
        self.min_value = min_value


class BudgetExceededError(ValueError):
    """Raised when an exhaustive computation is asked to exceed its enumeration budget."""

    def __init__(self, message: str, *, size: int, limit: int):
        super().__init__(message)
        self.size = size
        self.limit = limit


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver stops before meeting its tolerance."""

    def __init__(self, message: str, *, last_iterate: Any, iterations: int, residual: float):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations
        self.residual = residual


__all__ = [
    "BudgetExceededError",
    "ConvergenceError",
    "DataFileError",
    "DimensionMismatchError",
    "DomainError",
    "GraphError",
    "KernelError",
    "NegativeKernelError",
    "NotPrimeError",
]
