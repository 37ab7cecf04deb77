"""Point-cloud container and the down-sampling, pass-through and Gaussian
filters used to clean clouds before octree conversion."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from lidarmap.errors import InputDomainError, ParameterError

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class PointCloud:
    """Ordered 3D points in the global frame.

    ``origins`` optionally holds, per point, the sensor position the ray
    was cast from; octree conversion needs it for free-space carving.
    """

    points: np.ndarray
    origins: np.ndarray | None = None
    frame_id: str = "map"

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise InputDomainError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)
        if self.origins is not None:
            org = np.asarray(self.origins, dtype=np.float64).reshape(-1, 3)
            if org.shape != pts.shape:
                raise InputDomainError(
                    f"origins shape {org.shape} does not match points shape {pts.shape}"
                )
            if not np.all(np.isfinite(org)):
                raise InputDomainError("sensor origins contain non-finite coordinates")
            object.__setattr__(self, "origins", org)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_origins(self) -> bool:
        return self.origins is not None

    def subset(self, index: np.ndarray) -> "PointCloud":
        org = None if self.origins is None else self.origins[index]
        return PointCloud(self.points[index], org, self.frame_id)

    @classmethod
    def empty(cls, with_origins: bool = False) -> "PointCloud":
        return cls(np.empty((0, 3)), np.empty((0, 3)) if with_origins else None)

    @classmethod
    def concatenate(cls, clouds: Sequence["PointCloud"]) -> "PointCloud":
        if not clouds:
            return cls.empty()
        pts = np.concatenate([c.points for c in clouds])
        if all(c.has_origins for c in clouds):
            org = np.concatenate([c.origins for c in clouds])
        else:
            org = None
        return cls(pts, org, clouds[0].frame_id)


def voxel_downsample(cloud: PointCloud, leaf: float) -> PointCloud:
    """Replace the points of every occupied ``leaf``-sided cube by their centroid.

    Cubes are anchored at the world origin; output is ordered by cube index.
    """
    if leaf <= 0:
        raise ParameterError(f"leaf size must be positive, got {leaf}")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / leaf).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)

    def centroids(values: np.ndarray) -> np.ndarray:
        return np.stack(
            [np.bincount(inverse, weights=values[:, k]) / counts for k in range(3)], axis=1
        )

    org = None if cloud.origins is None else centroids(cloud.origins)
    return PointCloud(centroids(cloud.points), org, cloud.frame_id)


def pass_through(cloud: PointCloud, axis: str, lo: float, hi: float) -> PointCloud:
    """Keep the points whose ``axis`` coordinate lies in [lo, hi]."""
    if axis not in AXES:
        raise ParameterError(f"unknown axis {axis!r}; expected one of x, y, z")
    if not lo < hi:
        raise ParameterError(f"pass-through needs min < max, got [{lo}, {hi}]")
    c = cloud.points[:, AXES[axis]]
    return cloud.subset(np.flatnonzero((c >= lo) & (c <= hi)))


def gaussian_smooth(cloud: PointCloud, sigma: float, radius: float) -> PointCloud:
    """Move each point to the Gaussian-weighted mean of its neighbours.

    Neighbours are all points within ``radius`` (the point itself included),
    weighted by ``exp(-d**2 / (2 sigma**2))``. Sensor origins are kept.
    """
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if radius < sigma:
        raise ParameterError(f"radius ({radius}) must be at least sigma ({sigma})")
    n = len(cloud)
    if n == 0:
        return cloud
    pts = cloud.points
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    # sort so that the accumulation order does not depend on the tree layout
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    i, j = pairs[:, 0], pairs[:, 1]
    d2 = np.sum((pts[i] - pts[j]) ** 2, axis=1)
    w = np.exp(-d2 / (2.0 * sigma * sigma))

    rows = np.concatenate([np.arange(n), i, j])
    cols = np.concatenate([np.arange(n), j, i])
    ws = np.concatenate([np.ones(n), w, w])
    wsum = np.bincount(rows, weights=ws, minlength=n)
    out = np.stack(
        [np.bincount(rows, weights=ws * pts[cols, k], minlength=n) / wsum for k in range(3)],
        axis=1,
    )
    return PointCloud(out, cloud.origins, cloud.frame_id)


@dataclass(frozen=True)
class DownSample:
    leaf: float

    def __post_init__(self) -> None:
        if self.leaf <= 0:
            raise ParameterError(f"leaf size must be positive, got {self.leaf}")

    def __call__(self, cloud: PointCloud) -> PointCloud:
        return voxel_downsample(cloud, self.leaf)


@dataclass(frozen=True)
class PassThrough:
    axis: str
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise ParameterError(f"unknown axis {self.axis!r}; expected one of x, y, z")
        if not self.lo < self.hi:
            raise ParameterError(f"pass-through needs min < max, got [{self.lo}, {self.hi}]")

    def __call__(self, cloud: PointCloud) -> PointCloud:
        return pass_through(cloud, self.axis, self.lo, self.hi)


@dataclass(frozen=True)
class Gaussian:
    sigma: float
    radius: float

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if self.radius < self.sigma:
            raise ParameterError(f"radius ({self.radius}) must be at least sigma ({self.sigma})")

    def __call__(self, cloud: PointCloud) -> PointCloud:
        return gaussian_smooth(cloud, self.sigma, self.radius)


Stage = Union[DownSample, PassThrough, Gaussian]


@dataclass(frozen=True)
class FilterPipeline:
    stages: tuple[Stage, ...] = field(default_factory=tuple)

    def __call__(self, cloud: PointCloud) -> PointCloud:
        return apply_pipeline(cloud, self)


def apply_pipeline(cloud: PointCloud, pipeline: FilterPipeline) -> PointCloud:
    for stage in pipeline.stages:
        cloud = stage(cloud)
    return cloud


PRESET_STAGES = {
    # stage flags per map: (down-sample, pass-through, gaussian)
    "map1": (False, True, False),
    "map2": (True, True, False),
    "map3": (True, True, False),
    "ref": (True, True, True),
}


def preset_pipeline(
    name: str,
    *,
    leaf: float = 0.05,
    axis: str = "z",
    lo: float = -0.5,
    hi: float = 2.5,
    sigma: float = 0.02,
    radius: float = 0.05,
) -> FilterPipeline:
    """Named per-map pipeline; stage parameters are configurable.

    ``none`` yields the empty pipeline.
    """
    if name == "none":
        return FilterPipeline()
    try:
        down, passthrough, gauss = PRESET_STAGES[name]
    except KeyError:
        raise ParameterError(
            f"unknown preset {name!r}; expected one of none, {', '.join(PRESET_STAGES)}"
        ) from None
    stages: list[Stage] = []
    if down:
        stages.append(DownSample(leaf))
    if passthrough:
        stages.append(PassThrough(axis, lo, hi))
    if gauss:
        stages.append(Gaussian(sigma, radius))
    return FilterPipeline(tuple(stages))


def parse_stage(text: str) -> Stage:
    """Parse ``downsample:LEAF``, ``passthrough:AXIS:MIN:MAX`` or ``gaussian:SIGMA:RADIUS``."""
    name, *args = text.split(":")
    try:
        if name == "downsample" and len(args) == 1:
            return DownSample(float(args[0]))
        if name == "passthrough" and len(args) == 3:
            return PassThrough(args[0], float(args[1]), float(args[2]))
        if name == "gaussian" and len(args) == 2:
            return Gaussian(float(args[0]), float(args[1]))
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"bad filter stage {text!r}: {exc}") from None
    raise ParameterError(f"bad filter stage {text!r}")


# -- file format ---------------------------------------------------------------


def write_pointcloud(path: str | Path, cloud: PointCloud) -> None:
    """Write the ASCII cloud format: header ``n has_origins``, then one point per line."""
    has = int(cloud.has_origins)
    with open(path, "w") as fh:
        fh.write(f"{len(cloud)} {has}\n")
        if has:
            rows = np.hstack([cloud.points, cloud.origins])
        else:
            rows = cloud.points
        for row in rows:
            fh.write(" ".join(format(v, ".9g") for v in row))
            fh.write("\n")


def read_pointcloud(path: str | Path) -> PointCloud:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise InputDomainError(f"{path}: malformed header")
        n, has = int(header[0]), int(header[1])
        ncol = 6 if has else 3
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2) if n else np.empty((0, ncol))
    if data.shape != (n, ncol):
        raise InputDomainError(f"{path}: expected {n}x{ncol} values, got {data.shape}")
    return PointCloud(data[:, :3], data[:, 3:] if has else None)


def cloud_from_points(points: Iterable[Sequence[float]], origins=None) -> PointCloud:
    pts = np.array(list(points), dtype=np.float64).reshape(-1, 3)
    org = None if origins is None else np.array(list(origins), dtype=np.float64).reshape(-1, 3)
    return PointCloud(pts, org)
