"""Exception hierarchy shared by every module of the package."""


class WCPDEError(Exception):
    """Base class for all package errors."""


class GridTooCoarse(WCPDEError):
    pass


class NotNested(WCPDEError):
    pass


class UnboundedAbove(WCPDEError):
    """A supremum over the truncated domain keeps growing toward the boundary."""

    def __init__(self, message, radii=None, values=None):
        super().__init__(message)
        self.radii = radii
        self.values = values


class OutOfClass(WCPDEError):
    """Symbolic check requested for a coefficient outside the radial-power class."""


class LinearSolveFailed(WCPDEError):
    pass


class EllipticityViolated(WCPDEError):
    pass


class InsufficientDecade(WCPDEError):
    pass


class LambdaTooSmall(WCPDEError):
    pass


class NonIntegrable(WCPDEError):
    pass


class DegenerateNullspace(WCPDEError):
    pass


class UnknownPreset(WCPDEError):
    pass


class SelfValidationFailed(WCPDEError):
    pass


class ConfigError(WCPDEError):
    """Malformed operator config, experiment spec, or suite manifest."""
