"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument violates an operation precondition."""


class AssumptionError(ValueError):
    """A finite-sample assumption required by a computation does not hold.

    Carries the assumption report (when available) so callers can inspect
    which check failed and by what margin.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConvergenceError(RuntimeError):
    """An iterative routine exhausted its budget; carries the last iterate."""

    def __init__(self, message, last_estimate=None, last_vector=None):
        super().__init__(message)
        self.last_estimate = last_estimate
        self.last_vector = last_vector


class ConfigError(ValueError):
    """Invalid experiment configuration or configuration file."""


class MetricUndefinedError(ValueError):
    """The requested metric has no defined value for these inputs."""
