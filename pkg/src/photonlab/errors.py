"""Exception hierarchy shared across the package."""


class PhotonLabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PhotonLabError, ValueError):
    """A configuration value or combination of values is invalid."""


class UsageError(PhotonLabError, ValueError):
    """An operation was called with an input it is not defined for."""


class FormatError(PhotonLabError, ValueError):
    """A file does not parse as the expected data product."""


class EstimationError(PhotonLabError, RuntimeError):
    """An estimator cannot produce a result from the given data."""


class RankDeficiencyError(EstimationError):
    """The fit problem has an unidentifiable parameter direction.

    ``parameter`` names the direction with the largest null-space component.
    """

    def __init__(self, message: str, parameter: str | None = None):
        super().__init__(message)
        self.parameter = parameter
