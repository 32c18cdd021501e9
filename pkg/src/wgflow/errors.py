"""Exception hierarchy shared by every wgflow module."""

from __future__ import annotations


class WGFlowError(Exception):
    """Base class for all errors raised by wgflow."""


class ComparabilityError(WGFlowError, ValueError):
    """Two ensembles do not share particle count and dimension."""


class CapacityError(WGFlowError, ValueError):
    """Problem size exceeds a configured cap."""


class ParameterError(WGFlowError, ValueError):
    """An argument is outside its admissible range."""


class EvaluationError(WGFlowError, ValueError):
    """A scalar field was evaluated outside its domain."""

    def __init__(self, message: str, index: int | None = None) -> None:
        super().__init__(message)
        self.index = index


class SamplingError(WGFlowError, RuntimeError):
    """Random sampling kept producing degenerate draws."""


class InnerSolverError(WGFlowError, RuntimeError):
    """The implicit-step inner solver did not reach its tolerance.

    ``record`` and ``snapshots`` carry the partial trajectory when the
    failure happens inside :func:`wgflow.steppers.run_trajectory`.
    """

    def __init__(self, message: str, best_residual: float, iterations: int) -> None:
        super().__init__(message)
        self.best_residual = best_residual
        self.iterations = iterations
        self.record = None
        self.snapshots = None


class DomainError(WGFlowError, ValueError):
    """A theory formula was called outside its hypotheses."""


class ApplicabilityError(WGFlowError, ValueError):
    """A diagnostic check does not apply to the given record/parameters."""


class PlanError(WGFlowError, ValueError):
    """A convergence sweep plan is inconsistent."""


class FitError(WGFlowError, ValueError):
    """Not enough usable points for an order fit."""


class ConfigError(WGFlowError, ValueError):
    """A run configuration is malformed."""
