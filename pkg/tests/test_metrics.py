import math

import numpy as np
import pytest
from oracles import brute_metrics, degraded_series, random_dense_pair

from lidarmap import IncompatibleMapsError, UndefinedRatioError, UndefinedScoreError
from lidarmap.metrics import (
    common_node_stats,
    correlation,
    correlation_from_probabilities,
    format_report,
    full_report,
    iou_per_type,
    log_odds_error,
    log_odds_terms,
    node_ratios,
    parse_report,
    table_header,
    table_row,
    weighted_iou,
)
from lidarmap.octree import BoundingBox, OccupancyOctree, from_dense, logodds

RES = 0.2
NAN = math.nan


def line_tree(values):
    """Voxels (i, 0, 0) for i = 0..n-1 with the given probabilities (None = unknown)."""
    vals = np.array([[[NAN if p is None else logodds(p)]] for p in values]).reshape(len(values), 1, 1)
    return from_dense(vals, (0, 0, 0), RES, depth=4)


def line_box(n):
    return BoundingBox((0, 0, 0), (n * RES, RES, RES))


def test_ratio_examples():
    free = from_dense(np.full((3, 3, 3), -1.0), (0, 0, 0), RES)
    r = node_ratios(free, BoundingBox((0, 0, 0), (0.6, 0.6, 0.6)))
    assert (r.r_occ, r.r_free, r.r_no) == (0, 1, 0)
    r = node_ratios(OccupancyOctree(RES, depth=4), BoundingBox((0, 0, 0), (0.6, 0.6, 0.6)))
    assert (r.r_occ, r.r_free, r.r_no) == (0, 0, 1)


def test_known_only_ratio_table_example():
    # 13059 occupied and 86941 free voxels in a 100 x 100 x 10 block plus unknown margin
    vals = np.full(100_000, -1.0)
    vals[:13059] = 1.0
    tree = from_dense(vals.reshape(100, 100, 10), (0, 0, 0), RES)
    box = BoundingBox((0, 0, 0), (100 * RES, 100 * RES, 12 * RES))
    r = node_ratios(tree, box, "known_only")
    assert r.r_occ == pytest.approx(0.13059, abs=1e-12)
    assert r.r_free == pytest.approx(0.86941, abs=1e-12)
    assert r.r_no == 0
    full = node_ratios(tree, box, "full_box")
    assert full.r_occ + full.r_free + full.r_no == pytest.approx(1.0, abs=1e-9)
    assert full.r_no == pytest.approx(2 / 12)


def test_known_only_empty_raises():
    with pytest.raises(UndefinedRatioError):
        node_ratios(OccupancyOctree(RES, depth=4), line_box(3), "known_only")


def test_iou_examples():
    same = line_tree([0.9, 0.2, None, 0.9])
    s = iou_per_type(same, same, line_box(4))
    assert (s.iou_occ, s.iou_free, s.iou_no) == (1, 1, 1)
    a, b = line_tree([0.9, None, None, None]), line_tree([0.2, None, None, None])
    assert iou_per_type(a, b, line_box(4)).iou_occ == 0
    ref = line_tree([0.9, 0.9, 0.2, 0.2])
    tar = line_tree([0.2, 0.9, 0.9, 0.2])
    assert iou_per_type(ref, tar, line_box(4)).iou_occ == pytest.approx(1 / 3)
    # no unknown voxels anywhere: that type is undefined
    assert iou_per_type(ref, tar, line_box(4)).iou_no is None


def test_weighted_iou_examples():
    ref = line_tree([0.9, 0.9, 0.2, 0.2])
    assert weighted_iou(ref, ref, line_box(4)) == pytest.approx(1.0, abs=1e-12)
    # disjoint occupancy, no unknowns: r_occ * 0 + r_free * IoU_free
    a, b = line_tree([0.9, 0.2, 0.2, 0.2]), line_tree([0.2, 0.9, 0.2, 0.2])
    assert weighted_iou(a, b, line_box(4)) == pytest.approx(0.25 * 0 + 0.75 * (2 / 4))


def test_weighted_iou_low_coverage_branches():
    m = line_tree([0.9] + [None] * 19)  # coverage 1/20 = 0.05
    box = line_box(20)
    assert weighted_iou(m, m, box) == pytest.approx(1.0)
    assert weighted_iou(m, m, box, literal=True) == pytest.approx(0.05)


def test_weighted_iou_no_reference_coverage():
    empty, other = OccupancyOctree(RES, depth=4), line_tree([0.9, None, None])
    with pytest.raises(UndefinedScoreError):
        weighted_iou(empty, other, line_box(30))
    assert weighted_iou(empty, other, line_box(30), literal=True) == 0.0


def test_log_odds_terms_examples():
    assert float(log_odds_terms([0.5], [0.25])[0]) == pytest.approx(0.5 * math.log(4 / 3), abs=1e-12)
    assert 0.5 * math.log(4 / 3) == pytest.approx(0.14384, abs=1e-5)
    assert float(log_odds_terms([1.0], [0.5])[0]) == pytest.approx(math.log(2), abs=1e-12)
    assert float(log_odds_terms([0.0], [0.5])[0]) == pytest.approx(math.log(2), abs=1e-12)
    # target probabilities at 0 or 1 are clamped, not infinite
    assert np.all(np.isfinite(log_odds_terms([0.3, 0.7], [0.0, 1.0])))


def test_log_odds_tree_example():
    ref, tar = line_tree([0.5]), line_tree([0.25])
    total, mean = log_odds_error(ref, tar, line_box(1))
    assert total == pytest.approx(0.14384, abs=1e-5)
    assert mean == total


def test_log_odds_no_common_raises():
    a, b = line_tree([0.9, None]), line_tree([None, 0.2])
    with pytest.raises(UndefinedScoreError):
        log_odds_error(a, b, line_box(2))


def test_correlation_examples():
    rho = correlation_from_probabilities([0.2, 0.8], [0.5, 0.9])
    assert rho == pytest.approx((0.04 + 0.06) / math.sqrt(0.20 * 0.10), abs=1e-12)
    assert rho == pytest.approx(0.70711, abs=1e-5)
    tree_rho = correlation(line_tree([0.2, 0.8]), line_tree([0.5, 0.9]), line_box(2))
    assert tree_rho == pytest.approx(0.70711, abs=1e-5)
    assert correlation_from_probabilities([0.2], [0.8]) == pytest.approx(1.0)
    assert correlation_from_probabilities([0.4, 0.4], [0.4, 0.4]) is None


def test_common_stats_examples():
    mean, dev, n = common_node_stats(line_tree([0.2]), line_tree([0.8]), line_box(1))
    assert (mean, dev, n) == (pytest.approx(0.5, abs=1e-6), pytest.approx(0.6, abs=1e-6), 1)
    mean, dev, n = common_node_stats(line_tree([0.2, 0.8]), line_tree([0.5, 0.9]), line_box(2))
    assert (mean, dev, n) == (pytest.approx(0.6, abs=1e-6), pytest.approx(0.2, abs=1e-6), 2)


def test_incompatible_maps():
    with pytest.raises(IncompatibleMapsError):
        full_report(OccupancyOctree(0.1, depth=4), OccupancyOctree(0.2, depth=4))


def compare_to_oracle(ref, tar, box):
    rep = full_report(ref, tar, box)
    lit = full_report(ref, tar, box, literal_iou=True)
    want = brute_metrics(ref, tar, box)
    want_lit = brute_metrics(ref, tar, box, literal=True)

    def close(a, b):
        if b is None:
            return a is None
        return a is not None and abs(a - b) <= 1e-12

    assert close(rep.iou.iou_occ, want["iou_occ"])
    assert close(rep.iou.iou_free, want["iou_free"])
    assert close(rep.iou.iou_no, want["iou_no"])
    assert close(rep.iou.weighted, want["weighted"])
    assert close(lit.iou.weighted, want_lit["weighted"])
    for f in ("r_occ", "r_free", "r_no"):
        assert close(getattr(rep.ref_ratios, f), want[f])
    assert rep.common_node_count == want["n_common"]
    if want["n_common"]:
        assert close(rep.log_odds_total, want["log_odds_total"])
        assert close(rep.log_odds_mean, want["log_odds_mean"])
        assert close(rep.correlation, want["correlation"])
        assert close(rep.mean_common_probability, want["mean_p"])
        assert close(rep.mean_probability_deviation, want["deviation"])


def test_brute_force_equivalence(rng):
    for _ in range(20):
        a, b = random_dense_pair(rng, p_unknown=rng.uniform(0.0, 0.95))
        ref = from_dense(a, (-4, -4, -4), RES)
        tar = from_dense(b, (-4, -4, -4), RES)
        compare_to_oracle(ref, tar, BoundingBox((-0.8, -0.8, -0.8), (0.8, 0.8, 0.8)))


def test_pruned_maps_match_oracle(rng):
    a = np.where(rng.random((8, 8, 8)) < 0.5, 1.0, -1.0)
    a[:4, :4, :4] = -1.0
    b = a.copy()
    b[4:, 4:, :] = NAN
    ref, tar = from_dense(a, (0, 0, 0), RES), from_dense(b, (0, 0, 0), RES)
    assert len(ref) < 512
    compare_to_oracle(ref, tar, BoundingBox((0.2, 0.0, 0.2), (1.6, 1.4, 1.6)))


def test_symmetry_of_iou(rng):
    for _ in range(10):
        a, b = random_dense_pair(rng)
        ta, tb = from_dense(a, (0, 0, 0), RES), from_dense(b, (0, 0, 0), RES)
        box = BoundingBox((0, 0, 0), (1.6, 1.6, 1.6))
        assert iou_per_type(ta, tb, box) == iou_per_type(tb, ta, box)


def test_identity_scores(rng):
    a, _ = random_dense_pair(rng)
    m = from_dense(a, (0, 0, 0), RES)
    r = full_report(m, m)
    assert r.iou.weighted == pytest.approx(1.0, abs=1e-12)
    assert r.log_odds_total == 0.0
    assert r.correlation == pytest.approx(1.0, abs=1e-12)
    assert r.mean_probability_deviation == 0.0


def test_log_odds_non_negative_random(rng):
    p_ref = rng.random(10_000)
    p_ref[:100] = 1.0
    p_ref[100:200] = 0.0
    p_tar = rng.random(10_000)
    assert np.all(log_odds_terms(p_ref, p_tar) >= 0.0)
    for _ in range(30):
        a, b = random_dense_pair(rng)
        total, _ = log_odds_error(from_dense(a, (0, 0, 0), RES), from_dense(b, (0, 0, 0), RES))
        assert total >= 0.0


def test_bounds_of_scores(rng):
    for _ in range(20):
        a, b = random_dense_pair(rng)
        r = full_report(from_dense(a, (0, 0, 0), RES), from_dense(b, (0, 0, 0), RES))
        for v in (r.iou.iou_occ, r.iou.iou_free, r.iou.iou_no, r.correlation):
            assert v is None or 0.0 <= v <= 1.0 + 1e-9


def test_monotone_degradation(rng):
    shape = (12, 12, 8)
    vals = np.where(rng.random(shape) < 0.3, rng.uniform(0.5, 3.0, shape), rng.uniform(-2.0, -0.2, shape))
    ref = from_dense(vals, (0, 0, 0), RES)
    n_occ = int(np.count_nonzero(vals > 0))
    prev = None
    for tar_vals, k in degraded_series(vals, [0, 0.1, 0.2, 0.3, 0.4, 0.5], logodds(0.12), rng):
        r = full_report(ref, from_dense(tar_vals, (0, 0, 0), RES))
        assert r.iou.iou_occ == (n_occ - k) / n_occ
        if prev is not None:
            assert r.iou.iou_occ <= prev.iou.iou_occ
            assert r.correlation <= prev.correlation
            assert r.log_odds_total >= prev.log_odds_total
        prev = r
    assert prev.iou.weighted < 1 and prev.log_odds_total > 0 and prev.correlation < 1


def test_report_text_round_trip():
    m = line_tree([0.9, 0.2, None, 0.7])
    r = full_report(m, m, line_box(4))
    text = format_report(r)
    kv = parse_report(text)
    assert kv["iou_weighted"] == "1"
    assert kv["log_odds_total"] == "0"
    assert kv["iou_no"] == "1"
    assert kv["common_node_count"] == "3"
    assert float(kv["resolution"]) == RES
    header = table_header().split(",")
    row = table_row(r).split(",")
    assert len(header) == len(row)
    assert row[header.index("correlation")] == kv["correlation"]


def test_report_with_undefined_fields():
    a, b = line_tree([0.9, None]), line_tree([None, 0.2])
    r = full_report(a, b, line_box(2))
    kv = parse_report(format_report(r))
    assert kv["log_odds_total"] == "undefined"
    assert kv["correlation"] == "undefined"
    assert kv["correlation_degenerate"] == "true"
