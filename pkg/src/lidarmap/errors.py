"""Exception types shared across the package."""


class LidarMapError(Exception):
    """Base class for all package errors."""


class InputDomainError(LidarMapError, ValueError):
    """An input value lies outside the domain an operation accepts."""


class ParameterError(LidarMapError, ValueError):
    """A configuration parameter is out of range."""


class IncompatibleMapsError(LidarMapError, ValueError):
    """Two maps cannot be compared (resolution or frame mismatch)."""


class UndefinedScoreError(LidarMapError, ArithmeticError):
    """A metric has no defined value for the given inputs."""


class UndefinedRatioError(UndefinedScoreError):
    """Node ratios with an empty denominator."""
