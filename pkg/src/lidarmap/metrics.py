"""Map-comparison metrics over two octrees sharing a voxel grid.

Every metric is evaluated on the finest voxels of a bounding box. Both trees
are rasterized once into dense log-odds grids (NaN marks unknown voxels)
and all scores are reductions over those grids, so the result does not
depend on how either tree happens to be pruned.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, fields
from typing import Literal

import numpy as np

from lidarmap.errors import UndefinedRatioError, UndefinedScoreError
from lidarmap.octree import BoundingBox, OccupancyOctree, count_voxels

P_HIGH = 0.9999
P_LOW = 0.0001
LOW_COVERAGE = 0.10

RatioMode = Literal["full_box", "known_only"]

UNKNOWN, FREE, OCC = 0, 1, 2


@dataclass(frozen=True)
class NodeRatios:
    r_occ: float
    r_free: float
    r_no: float


@dataclass(frozen=True)
class IoUScores:
    """Per-type IoU; a type whose union is empty is ``None`` (undefined)."""

    iou_occ: float | None
    iou_free: float | None
    iou_no: float | None
    weighted: float | None = None


def node_ratios(tree: OccupancyOctree, box: BoundingBox, mode: RatioMode = "full_box") -> NodeRatios:
    """Occupied / free / unknown proportions of the box.

    ``known_only`` drops unknown voxels from the denominator.
    """
    c = count_voxels(tree, box)
    return _ratios(c.n_occ, c.n_free, c.n_no, mode)


def _ratios(n_occ: int, n_free: int, n_no: int, mode: RatioMode) -> NodeRatios:
    if mode == "known_only":
        n_no = 0
    elif mode != "full_box":
        raise ValueError(f"unknown ratio mode {mode!r}")
    total = n_occ + n_free + n_no
    if total == 0:
        raise UndefinedRatioError("no voxels in the ratio denominator")
    return NodeRatios(n_occ / total, n_free / total, n_no / total)


def log_odds_terms(p_ref: np.ndarray, p_tar: np.ndarray) -> np.ndarray:
    """Per-voxel log-ratio error between reference and target probabilities.

    Near-certain reference voxels keep only the occupied (or only the free)
    term; all others sum both. Target probabilities are clamped into
    [0.0001, 0.9999] so no ratio blows up.
    """
    p_ref = np.asarray(p_ref, dtype=np.float64)
    p_tar = np.clip(np.asarray(p_tar, dtype=np.float64), P_LOW, P_HIGH)
    high = p_ref >= P_HIGH
    low = p_ref <= P_LOW
    with np.errstate(divide="ignore", invalid="ignore"):
        occ_term = np.where(low, 0.0, np.log(p_ref / p_tar) * p_ref)
        free_term = np.where(high, 0.0, np.log((1.0 - p_ref) / (1.0 - p_tar)) * (1.0 - p_ref))
    return occ_term + free_term


def correlation_from_probabilities(p_ref: np.ndarray, p_tar: np.ndarray) -> float | None:
    """Normalized cross-correlation around the shared mean of both maps.

    The numerator sums absolute products, so the score lies in [0, 1].
    Returns None when either map has zero deviation from the shared mean.
    """
    p_ref = np.asarray(p_ref, dtype=np.float64)
    p_tar = np.asarray(p_tar, dtype=np.float64)
    n = p_ref.size
    if n == 0:
        raise UndefinedScoreError("no common known voxels")
    p_bar = (p_tar.sum() + p_ref.sum()) / (2 * n)
    dr = p_ref - p_bar
    dt = p_tar - p_bar
    den = math.sqrt(float(np.sum(dr * dr)) * float(np.sum(dt * dt)))
    if den == 0.0:
        return None
    return float(np.sum(np.abs(dr * dt))) / den


class _Comparison:
    """Rasterized pair of maps over one box."""

    def __init__(self, ref: OccupancyOctree, tar: OccupancyOctree, box: BoundingBox | None):
        ref.check_compatible(tar)
        if box is None:
            box = default_box(ref, tar)
        self.box = box.snapped(ref.resolution)
        lo, hi = box.index_range(ref.resolution)
        self.l_ref = ref.rasterize(lo, hi)
        self.l_tar = tar.rasterize(lo, hi)
        self.s_ref = _states(self.l_ref, ref.threshold)
        self.s_tar = _states(self.l_tar, tar.threshold)
        common = (self.s_ref != UNKNOWN) & (self.s_tar != UNKNOWN)
        self.p_ref = _prob(self.l_ref[common])
        self.p_tar = _prob(self.l_tar[common])

    @property
    def n_common(self) -> int:
        return int(self.p_ref.size)

    def counts(self, states: np.ndarray) -> tuple[int, int, int]:
        c = np.bincount(states.ravel(), minlength=3)
        return int(c[OCC]), int(c[FREE]), int(c[UNKNOWN])

    def iou(self) -> IoUScores:
        vals = []
        for t in (OCC, FREE, UNKNOWN):
            a, b = self.s_ref == t, self.s_tar == t
            union = int(np.count_nonzero(a | b))
            vals.append(int(np.count_nonzero(a & b)) / union if union else None)
        return IoUScores(*vals)

    def weighted_iou(self, literal: bool = False) -> float:
        s = self.iou()
        if s.iou_occ is None and s.iou_free is None and s.iou_no is None:
            raise UndefinedScoreError("all IoU components are undefined")
        r = _ratios(*self.counts(self.s_ref), "full_box")
        # an undefined component has an empty union, so its reference weight is 0
        t_occ = r.r_occ * (s.iou_occ or 0.0)
        t_free = r.r_free * (s.iou_free or 0.0)
        cover = r.r_occ + r.r_free
        if cover > LOW_COVERAGE:
            return t_occ + t_free + r.r_no * (s.iou_no or 0.0)
        if literal:
            return t_occ + t_free
        if cover == 0.0:
            raise UndefinedScoreError("reference map has no known voxels in the box")
        return (t_occ + t_free) / cover

    def log_odds(self) -> tuple[float, float]:
        if self.n_common == 0:
            raise UndefinedScoreError("no common known voxels")
        total = float(np.sum(log_odds_terms(self.p_ref, self.p_tar)))
        return total, total / self.n_common

    def correlation(self) -> float | None:
        return correlation_from_probabilities(self.p_ref, self.p_tar)

    def common_stats(self) -> tuple[float, float, int]:
        if self.n_common == 0:
            raise UndefinedScoreError("no common known voxels")
        mean = float(np.mean((self.p_ref + self.p_tar) / 2.0))
        dev = float(np.mean(np.abs(self.p_ref - self.p_tar)))
        return mean, dev, self.n_common


def _states(l: np.ndarray, threshold: float) -> np.ndarray:
    s = np.full(l.shape, UNKNOWN, dtype=np.int8)
    known = ~np.isnan(l)
    s[known] = np.where(_prob(l[known]) > threshold, OCC, FREE)
    return s


def _prob(l: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-l))


def default_box(ref: OccupancyOctree, tar: OccupancyOctree) -> BoundingBox:
    """Smallest grid-aligned box holding every known voxel of either map."""
    bounds = [b for b in (ref.known_index_bounds(), tar.known_index_bounds()) if b is not None]
    if not bounds:
        raise UndefinedScoreError("both maps are empty")
    lo = tuple(min(b[0][i] for b in bounds) for i in range(3))
    hi = tuple(max(b[1][i] for b in bounds) for i in range(3))
    return BoundingBox.from_indices(lo, hi, ref.resolution)  # type: ignore[arg-type]


def iou_per_type(ref: OccupancyOctree, tar: OccupancyOctree, box: BoundingBox | None = None) -> IoUScores:
    return _Comparison(ref, tar, box).iou()


def weighted_iou(
    ref: OccupancyOctree, tar: OccupancyOctree, box: BoundingBox | None = None, literal: bool = False
) -> float:
    """Ratio-weighted sum of the per-type IoUs, weights from the reference map.

    When occupied plus free voxels cover at most 10% of the box the unknown
    term is dropped. By default the remaining two terms are renormalized by
    that coverage so identical maps score 1; ``literal=True`` skips it.
    """
    return _Comparison(ref, tar, box).weighted_iou(literal)


def log_odds_error(ref: OccupancyOctree, tar: OccupancyOctree, box: BoundingBox | None = None) -> tuple[float, float]:
    """Total and per-common-voxel log-ratio error (natural log)."""
    return _Comparison(ref, tar, box).log_odds()


def correlation(ref: OccupancyOctree, tar: OccupancyOctree, box: BoundingBox | None = None) -> float | None:
    return _Comparison(ref, tar, box).correlation()


def common_node_stats(
    ref: OccupancyOctree, tar: OccupancyOctree, box: BoundingBox | None = None
) -> tuple[float, float, int]:
    """Mean probability, mean absolute probability gap, and count of common voxels."""
    return _Comparison(ref, tar, box).common_stats()


@dataclass
class MetricReport:
    resolution: float
    box: BoundingBox
    voxel_count: int
    ratio_mode: str
    iou_mode: str
    ref_ratios: NodeRatios | None
    tar_ratios: NodeRatios | None
    iou: IoUScores
    log_odds_total: float | None
    log_odds_mean: float | None
    correlation: float | None
    correlation_degenerate: bool
    mean_common_probability: float | None
    mean_probability_deviation: float | None
    common_node_count: int
    ref_leaf_count: int
    tar_leaf_count: int
    evaluation_time_ms: float = field(default=0.0, compare=False)

    def to_text(self) -> str:
        return format_report(self)


def full_report(
    ref: OccupancyOctree,
    tar: OccupancyOctree,
    box: BoundingBox | None = None,
    *,
    literal_iou: bool = False,
    ratio_mode: RatioMode = "full_box",
) -> MetricReport:
    """Run every metric over one shared rasterization and time the whole pass.

    Scores without a defined value are reported as None rather than raised.
    """
    start = time.perf_counter()
    cmp = _Comparison(ref, tar, box)

    def attempt(fn, default=None):
        try:
            return fn()
        except UndefinedScoreError:
            return default

    ref_counts, tar_counts = cmp.counts(cmp.s_ref), cmp.counts(cmp.s_tar)
    iou = cmp.iou()
    weighted = attempt(lambda: cmp.weighted_iou(literal_iou))
    lo_total, lo_mean = attempt(cmp.log_odds, (None, None))
    rho = attempt(cmp.correlation)
    mean_p, dev, n_common = attempt(cmp.common_stats, (None, None, 0))
    report = MetricReport(
        resolution=ref.resolution,
        box=cmp.box,
        voxel_count=int(cmp.s_ref.size),
        ratio_mode=ratio_mode,
        iou_mode="literal" if literal_iou else "renormalized",
        ref_ratios=attempt(lambda: _ratios(*ref_counts, ratio_mode)),
        tar_ratios=attempt(lambda: _ratios(*tar_counts, ratio_mode)),
        iou=IoUScores(iou.iou_occ, iou.iou_free, iou.iou_no, weighted),
        log_odds_total=lo_total,
        log_odds_mean=lo_mean,
        correlation=rho,
        correlation_degenerate=rho is None or n_common < 2,
        mean_common_probability=mean_p,
        mean_probability_deviation=dev,
        common_node_count=n_common,
        ref_leaf_count=len(ref),
        tar_leaf_count=len(tar),
    )
    report.evaluation_time_ms = (time.perf_counter() - start) * 1e3
    return report


# -- text output ---------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".9g")
    return str(v)


def report_items(report: MetricReport) -> list[tuple[str, str]]:
    items = [
        ("resolution", _fmt(report.resolution)),
        ("box_min", " ".join(_fmt(v) for v in report.box.min_corner)),
        ("box_max", " ".join(_fmt(v) for v in report.box.max_corner)),
        ("voxel_count", _fmt(report.voxel_count)),
        ("ratio_mode", report.ratio_mode),
        ("iou_mode", report.iou_mode),
    ]
    for name, r in (("ref", report.ref_ratios), ("tar", report.tar_ratios)):
        for f in ("r_occ", "r_free", "r_no"):
            items.append((f"{name}_{f}", _fmt(None if r is None else getattr(r, f))))
    for f in fields(IoUScores):
        items.append((f.name if f.name != "weighted" else "iou_weighted", _fmt(getattr(report.iou, f.name))))
    for key in (
        "log_odds_total",
        "log_odds_mean",
        "correlation",
        "correlation_degenerate",
        "mean_common_probability",
        "mean_probability_deviation",
        "common_node_count",
        "ref_leaf_count",
        "tar_leaf_count",
        "evaluation_time_ms",
    ):
        items.append((key, _fmt(getattr(report, key))))
    return items


def format_report(report: MetricReport) -> str:
    """``key: value`` lines; floats carry 9 significant digits."""
    lines = [f"{k}: {v}" for k, v in report_items(report)]
    lines.append("correlation_note: numerator uses absolute products; anti-correlated maps also score high")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if ":" in line:
            k, v = line.split(":", 1)
            out[k.strip()] = v.strip()
    return out


def table_header(delimiter: str = ",") -> str:
    return delimiter.join(k for k, _ in report_items(_EMPTY_REPORT))


def table_row(report: MetricReport, delimiter: str = ",") -> str:
    return delimiter.join(v for _, v in report_items(report))


_EMPTY_REPORT = MetricReport(
    1.0, BoundingBox((0, 0, 0), (1, 1, 1)), 0, "", "", None, None,
    IoUScores(None, None, None), None, None, None, True, None, None, 0, 0, 0,
)
