"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SpdeCharError(Exception):
    """Base class for every error raised by the package."""


class EvaluationError(SpdeCharError):
    """A field returned a non-finite value."""


class ResolutionError(SpdeCharError):
    """Grid spacing too coarse for the requested kernel width."""


class DomainError(SpdeCharError):
    """Grid does not cover the region an operation needs."""


class RangeError(SpdeCharError, ValueError):
    """Parameter outside its admissible range."""


class DimensionError(SpdeCharError, ValueError):
    """Unsupported spatial dimension."""


class BlowUpError(SpdeCharError):
    """A characteristic left the guard box."""

    def __init__(self, m: int, n: int, j: int, value: float, limit: float):
        self.m, self.n, self.j = m, n, j
        self.value, self.limit = value, limit
        super().__init__(
            f"trajectory left guard box [-{limit:g}, {limit:g}] on path m={m}, "
            f"step n={n}, point j={j} (value {value:g})"
        )


class IntegratorError(SpdeCharError):
    """Time integration produced an inadmissible state (e.g. det DX <= 0)."""


class MonotonicityError(SpdeCharError):
    """1-D flow map is not strictly increasing, so it cannot be inverted."""


class ConditioningError(SpdeCharError):
    """Jacobian too small to divide by."""


class GuardError(SpdeCharError):
    """Bound constants diverge, so the requested weight does not exist."""


class AlignmentError(SpdeCharError):
    """Time grids of two inputs do not match."""


class WindowError(SpdeCharError):
    """Trajectory left the window on which a grid quantity is reliable."""


class ConfigError(SpdeCharError):
    """Experiment configuration failed validation."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class UsageError(SpdeCharError):
    """Unknown command-line name or argument."""


class SweepError(SpdeCharError):
    """One value of a parameter sweep failed; ``eps`` names it."""

    def __init__(self, eps: float, cause: Exception):
        self.eps = eps
        super().__init__(f"eps={eps:g}: {type(cause).__name__}: {cause}")
