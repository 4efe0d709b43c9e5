"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class FairUnlearnError(Exception):
    exit_code = 1


class DataError(FairUnlearnError, ValueError):
    """Malformed input: missing columns, unmappable values, empty groups."""

    exit_code = 2


class ConfigError(FairUnlearnError, ValueError):
    exit_code = 2


class InfeasibleRequestError(FairUnlearnError, ValueError):
    """A deletion request that would leave a group (or cell) too small."""

    exit_code = 3


class ConvergenceError(FairUnlearnError, RuntimeError):
    """Training stopped before reaching the gradient tolerance."""

    exit_code = 4

    def __init__(self, message: str, theta=None, grad_norm: float = float("nan")):
        super().__init__(message)
        self.theta = theta
        self.grad_norm = grad_norm
