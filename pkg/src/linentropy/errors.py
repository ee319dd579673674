"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid inputs: bad parameters, violated preconditions, malformed configs."""


class ResolutionError(ValidationError):
    """Binning grid too coarse to resolve the bandwidth."""


class OracleError(RuntimeError):
    """A numerical oracle failed to produce a trustworthy value."""


class NoCharacteristicFunction(ValidationError):
    """The innovation law has no analytic characteristic function and no fallback was allowed."""
