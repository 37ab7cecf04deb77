"""Resolution sweep: conversion cost and map volume against voxel size."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from typing import Sequence

from lidarmap.metrics import full_report
from lidarmap.octree import count_voxels, from_pointcloud
from lidarmap.pointcloud import PointCloud


@dataclass(frozen=True)
class SweepRow:
    resolution: float
    conversion_ms: float
    occupied_volume: float
    leaf_count: int
    evaluation_ms: float
    weighted_iou: float | None
    log_odds_total: float | None
    correlation: float | None

    HEADER = (
        "resolution",
        "conversion_ms",
        "occupied_volume_m3",
        "leaf_count",
        "evaluation_ms",
        "iou_weighted",
        "log_odds_total",
        "correlation",
    )

    def cells(self) -> list[str]:
        def f(v):
            return "undefined" if v is None else format(v, ".9g")

        return [
            f(self.resolution),
            f(self.conversion_ms),
            f(self.occupied_volume),
            str(self.leaf_count),
            f(self.evaluation_ms),
            f(self.weighted_iou),
            f(self.log_odds_total),
            f(self.correlation),
        ]


def resolution_sweep(
    cloud: PointCloud,
    resolutions: Sequence[float],
    trials: int = 5,
    origin=None,
) -> list[SweepRow]:
    """Convert ``cloud`` at each resolution and self-compare the result.

    Times are medians over ``trials`` repetitions; occupied volume is the
    occupied voxel count times the voxel volume.
    """
    rows = []
    for res in resolutions:
        conv, evals = [], []
        tree = report = None
        for _ in range(max(1, trials)):
            t0 = time.perf_counter()
            tree = from_pointcloud(cloud, res, origin=origin)
            conv.append((time.perf_counter() - t0) * 1e3)
            if tree.is_empty():
                evals.append(0.0)
                continue
            report = full_report(tree, tree)
            evals.append(report.evaluation_time_ms)
        assert tree is not None
        bounds = tree.known_bounds()
        n_occ = count_voxels(tree, bounds).n_occ if bounds is not None else 0
        rows.append(
            SweepRow(
                resolution=res,
                conversion_ms=statistics.median(conv),
                occupied_volume=n_occ * res**3,
                leaf_count=len(tree),
                evaluation_ms=statistics.median(evals),
                weighted_iou=None if report is None else report.iou.weighted,
                log_odds_total=None if report is None else report.log_odds_total,
                correlation=None if report is None else report.correlation,
            )
        )
    return rows
