"""Exception types shared across the toolkit."""


class MniError(Exception):
    """Base class for toolkit errors."""


class ConfigurationError(MniError):
    """An input specification (design, norm, config file, ...) is invalid."""


class RankDeficientDesignError(MniError):
    """The design matrix is numerically row-rank deficient; the feasible set
    of the interpolation constraints may be empty."""


class InfeasibleError(MniError):
    """A constrained program has an empty feasible set.  The ``certificate``
    attribute carries the offending bound (e.g. the smallest achievable norm)."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class EstimatorError(MniError):
    """A Monte Carlo estimator could not produce a usable value (solver
    failure budget exceeded, bisection failed to bracket, ...)."""


class UndefinedMedianError(EstimatorError):
    """More than half of the replicates were infeasible, so the median is +inf."""
