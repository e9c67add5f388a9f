"""Exception types shared across the package."""


class MidesignError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(MidesignError):
    """Invalid static configuration (dimensions, schedules, config files)."""


class InputError(MidesignError):
    """Runtime inputs violate a precondition (shape mismatch, bad parameters)."""


class NumericalError(MidesignError):
    """Non-finite values, overflow, or singular linear algebra."""


class CapabilityError(MidesignError):
    """The requested operation is not supported by this model."""


class DegenerateWeightsError(MidesignError):
    """Posterior re-weighting produced unusable weights."""


class FitError(MidesignError):
    """Surrogate-model fitting failed."""
