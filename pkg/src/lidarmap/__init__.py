"""3D occupancy mapping from 2D lidar scans and octree map-quality metrics."""

from lidarmap.errors import (
    IncompatibleMapsError,
    InputDomainError,
    LidarMapError,
    ParameterError,
    UndefinedRatioError,
    UndefinedScoreError,
)

__version__ = "0.1.0"

__all__ = [
    "IncompatibleMapsError",
    "InputDomainError",
    "LidarMapError",
    "ParameterError",
    "UndefinedRatioError",
    "UndefinedScoreError",
]
