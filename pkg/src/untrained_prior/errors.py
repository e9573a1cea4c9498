"""
Exception hierarchy for untrained-prior

Library errors derive from both ``UntrainedPriorError`` and the matching
builtin exception, so callers may catch either.
"""

from typing import List, Optional, Sequence, Tuple


class UntrainedPriorError(Exception):
    """Base class for all library errors."""


class ShapeMismatchError(UntrainedPriorError, ValueError):
    """Array shapes are inconsistent with the generator or problem."""

    def __init__(self, what: str, expected: Tuple[int, ...], actual: Tuple[int, ...]):
        self.what = what
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(f"{what}: expected shape {self.expected}, got {self.actual}")


class DivergenceError(UntrainedPriorError, ArithmeticError):
    """Gradient descent produced a non-finite value."""

    def __init__(self, iteration: int, last_finite_residual: Optional[float], context: str = ""):
        self.iteration = iteration
        self.last_finite_residual = last_finite_residual
        self.context = context
        message = f"non-finite residual at iteration {iteration}"
        if last_finite_residual is not None:
            message += f" (last finite residual norm {last_finite_residual:.6g})"
        if context:
            message += f" [{context}]"
        super().__init__(message)


class ConfigError(UntrainedPriorError, ValueError):
    """Run configuration failed validation."""

    def __init__(self, errors: Sequence[str]):
        self.errors: List[str] = list(errors)
        super().__init__("; ".join(self.errors) or "invalid configuration")
