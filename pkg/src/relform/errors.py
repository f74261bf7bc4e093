"""Exception types shared across the package."""


class RelformError(Exception):
    """Base class for all package errors."""


class ConfigError(RelformError):
    """Scenario file or override is invalid; message names the offending key."""


class NoValidWeights(RelformError):
    """The graph/target pair admits no usable equilibrium stress."""


class NotPositiveDefinite(RelformError):
    """A covariance parameter or matrix is not positive definite."""


class MissingEstimate(RelformError):
    """A control law needs a neighbor estimate that was not supplied."""


class SingularInnovation(RelformError):
    """The filter innovation matrix is numerically singular."""


class RuntimeFailure(RelformError):
    """A simulation run aborted; carries run index and step."""

    def __init__(self, message, run=None, step=None):
        super().__init__(message)
        self.run = run
        self.step = step
