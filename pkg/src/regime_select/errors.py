"""Exception types shared across the package."""


class RegimeSelectError(Exception):
    """Base class for package-specific errors."""


class ModelValidationError(RegimeSelectError):
    """A model specification is structurally or semantically invalid."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations is not None else []


class NoStationaryDistributionError(RegimeSelectError):
    """The transition matrix has no unique stationary distribution."""


class NumericalError(RegimeSelectError):
    """A numerical precondition failed (degenerate quadratic form, underflow, ...)."""


class OracleFailureError(NumericalError):
    """A numeric oracle (quadrature) did not converge to its target accuracy."""


class FitError(RegimeSelectError):
    """Model fitting failed (regime starvation, no successful restart, ...)."""
