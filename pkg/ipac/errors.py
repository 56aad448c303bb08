"""Exception hierarchy shared by the library and the command line."""


class IpacError(Exception):
    """Base class for every error raised on purpose by this package."""


class ConfigurationError(IpacError, ValueError):
    """Bad scenario file, bad override or an empty sweep grid."""


class DegenerateGeometryError(IpacError, ValueError):
    """Coincident positions or a zero-length direction."""


class BelowHorizonError(IpacError, ValueError):
    """Atmospheric attenuation requested for a link at or below the horizon."""


class DegenerateInputError(IpacError, ValueError):
    """Input vector carries no usable phase information (all zeros)."""


class UnlocalizableGeometryError(IpacError, ArithmeticError):
    """The Fisher information is singular, so no finite position bound exists."""

    def __init__(self, message, eigen_ratio=0.0):
        super().__init__(message)
        self.eigen_ratio = eigen_ratio


class OutputError(IpacError, OSError):
    """A result file or its sidecar could not be written."""
