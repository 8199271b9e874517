"""Exception and warning types raised across the package."""


class InvplanError(Exception):
    """Base class for all errors raised by invplan."""


class ParameterError(InvplanError, ValueError):
    pass


class NonPositiveSigma(ParameterError):
    pass


class NonPositiveAlpha(ParameterError):
    pass


class NonPositiveDim(ParameterError):
    pass


class NonPositiveU(InvplanError, ValueError):
    pass


class OracleUnavailable(InvplanError):
    """The closed form only exists when alpha == dim * sigma**2."""


class UnknownFamily(InvplanError, ValueError):
    pass


class BadGridSpec(InvplanError, ValueError):
    pass


class SolverCertificateError(InvplanError):
    """A monotone-iteration certificate could not be issued."""


class MaxItersExceeded(SolverCertificateError):
    pass


class MonotonicityViolated(SolverCertificateError):
    pass


class BracketTooWide(SolverCertificateError):
    pass


class NonPositiveNode(InvplanError, ValueError):
    pass


class BoundViolated(InvplanError):
    def __init__(self, message, node=None, r=None, value=None):
        super().__init__(message)
        self.node = node
        self.r = r
        self.value = value


class StateOutsideGrid(InvplanError, ValueError):
    pass


class UAboveOne(UserWarning):
    """u > 1 maps to a negative value function; legal but outside the bracket."""


class DiagnosticWarning(UserWarning):
    pass


class ConfigError(InvplanError, ValueError):
    """Malformed or unknown entries in a run configuration."""
