"""Exceptions raised by the simulator and the analytic toolkit."""


class AdhocCapacityError(ValueError):
    """Base class for every error raised on purpose by this package."""


class InvalidConfigError(AdhocCapacityError):
    """A NetworkConfig, ExperimentSpec or config file is not usable."""


class DomainError(AdhocCapacityError):
    """An argument lies outside the domain of the function called."""


class NonMonotoneError(DomainError):
    pass


class FitError(DomainError):
    pass


class DivergenceError(AdhocCapacityError, ArithmeticError):
    """The requested quantity is infinite (e.g. a route is never found)."""


class InvalidRouteError(AdhocCapacityError):
    pass


class SweepFailedError(AdhocCapacityError):
    """Every point of a sweep failed."""
