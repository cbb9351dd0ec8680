"""Exception types shared across the package."""


class CVQKDError(Exception):
    """Base class for all errors raised by this package."""


class UnphysicalStateError(CVQKDError, ValueError):
    """A covariance matrix violates the uncertainty principle."""

    def __init__(self, message, nu_min=None):
        super().__init__(message)
        self.nu_min = nu_min


class DegenerateMeasurementError(CVQKDError, ValueError):
    """Homodyne conditioning on a quadrature with (near) zero variance."""


class BudgetExhaustedError(CVQKDError, ValueError):
    """The tail correction consumes the whole sampling share of the secrecy budget."""


class NumericalError(CVQKDError, ArithmeticError):
    """A numerical routine failed to reach its accuracy target."""


class ConfigError(CVQKDError, ValueError):
    """Invalid scenario configuration."""
