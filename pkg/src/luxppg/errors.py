"""Exception types shared across the pipeline."""


class LuxppgError(Exception):
    """Base class for all library errors."""


class NotFoundError(LuxppgError, FileNotFoundError):
    """A required file or directory is missing."""


class FormatError(LuxppgError, ValueError):
    """On-disk data violates the recording layout."""


class ConfigError(LuxppgError, ValueError):
    """Invalid configuration value."""


class GeometryError(LuxppgError, ValueError):
    """Box or landmark geometry is degenerate or out of bounds."""


class LengthError(LuxppgError, ValueError):
    """Signal too short for the requested operation."""


class SolverError(LuxppgError, RuntimeError):
    """Iterative solver exhausted its iteration budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateWindowError(LuxppgError, ValueError):
    """A trace window has a non-positive channel mean."""


class DegenerateInputError(LuxppgError, ValueError):
    """Input covariance is rank deficient."""


class ConvergenceError(LuxppgError, RuntimeError):
    """Fixed-point iteration did not converge."""


class MetricError(LuxppgError, ValueError):
    """Metric undefined for the given input."""
