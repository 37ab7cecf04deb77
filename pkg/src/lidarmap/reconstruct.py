"""Turn scan logs into global-frame point clouds.

Static stations use the two-branch motor-yaw transform directly. Moving runs
first fuse the two yaw streams by covariance intersection, pair the fused
yaw with the position stream by timestamp, and then place every sample at
the pose interpolated for its own timestamp.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from lidarmap.geometry import (
    GaussianScalarEstimate,
    PoseInterpolator,
    PositionEstimate,
    ScannerPose,
    ScanSample,
    compose_poses,
    fuse_yaw_streams,
    transform_scan_sample,
    wrap_pi,
)
from lidarmap.pointcloud import PointCloud

log = logging.getLogger(__name__)


@dataclass
class BuildSummary:
    samples: int = 0
    dropouts: int = 0
    gaps: int = 0
    points: int = 0


def static_cloud(
    samples: Sequence[ScanSample],
    x: float,
    y: float,
    height: float = 0.0,
    summary: BuildSummary | None = None,
) -> PointCloud:
    """Points from one tripod station; each sample carries its own motor yaw."""
    summary = summary if summary is not None else BuildSummary()
    pts, origins = [], []
    for s in samples:
        summary.samples += 1
        if s.is_dropout:
            summary.dropouts += 1
            continue
        pose = ScannerPose(x, y, s.motor_yaw, height)
        pts.append(transform_scan_sample(pose, s))
        origins.append(pose.origin)
    summary.points += len(pts)
    return PointCloud(np.array(pts, dtype=float).reshape(-1, 3), np.array(origins, dtype=float).reshape(-1, 3))


def moving_cloud(
    samples: Sequence[ScanSample],
    yaw_primary: Sequence[GaussianScalarEstimate],
    yaw_secondary: Sequence[GaussianScalarEstimate],
    position: Sequence[PositionEstimate],
    height: float,
    max_skew: float = 0.05,
    summary: BuildSummary | None = None,
) -> PointCloud:
    """Points from a scanner riding on a platform whose pose is estimated.

    Samples with no pose estimate within ``max_skew`` are counted as gaps
    and skipped.
    """
    summary = summary if summary is not None else BuildSummary()
    fused = fuse_yaw_streams(yaw_primary, yaw_secondary, max_skew)
    poses = compose_poses(fused, position, max_skew)
    lookup = PoseInterpolator(poses, max_skew)
    pts, origins = [], []
    for s in samples:
        summary.samples += 1
        if s.is_dropout:
            summary.dropouts += 1
            continue
        p = lookup(s.timestamp)
        if p is None:
            summary.gaps += 1
            continue
        pose = ScannerPose(p.x, p.y, p.yaw, height)
        pts.append(transform_scan_sample(pose, s))
        origins.append(pose.origin)
    if summary.gaps:
        log.warning("%d samples had no pose within %.3f s", summary.gaps, max_skew)
    summary.points += len(pts)
    return PointCloud(np.array(pts, dtype=float).reshape(-1, 3), np.array(origins, dtype=float).reshape(-1, 3))


def fused_yaw_errors(
    fused: Sequence[GaussianScalarEstimate], truth_yaw_at
) -> np.ndarray:
    """Wrapped yaw errors of an estimate stream against a truth lookup."""
    return np.array([wrap_pi(e.mean - truth_yaw_at(e.timestamp)) for e in fused])
