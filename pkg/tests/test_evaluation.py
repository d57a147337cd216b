import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symparts.errors import InputError
from symparts.evaluation import (HIT_IOU, ScoredDetection, iou, match_detections, pr_curve, roc_auc,
                                 save_pr_plot, score_image)


def _mask(cells, shape=(10, 20)):
    m = np.zeros(shape, bool)
    for y0, y1, x0, x1 in cells:
        m[y0:y1, x0:x1] = True
    return m


# -- IoU --------------------------------------------------------------------------


def test_iou_identical():
    m = _mask([(0, 5, 0, 5)])
    assert iou(m, m) == 1.0


def test_iou_disjoint():
    assert iou(_mask([(0, 5, 0, 5)]), _mask([(5, 10, 5, 10)])) == 0.0


def test_iou_one_third():
    a = _mask([(0, 10, 0, 10)])
    b = _mask([(0, 10, 5, 15)])
    assert iou(a, b) == 1 / 3


def test_iou_both_empty():
    z = np.zeros((4, 4), bool)
    assert iou(z, z) == 1.0


def test_iou_shape_mismatch():
    with pytest.raises(InputError):
        iou(np.zeros((3, 3), bool), np.zeros((3, 4), bool))


@given(st.integers(0, 2**31))
def test_iou_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((6, 7)) < 0.4, rng.random((6, 7)) < 0.4
    assert iou(a, b) == iou(b, a)
    assert 0.0 <= iou(a, b) <= 1.0


# -- matching -----------------------------------------------------------------


def _pair_with_iou(inter, union):
    """Two 1-row masks with the given intersection and union pixel counts."""
    a = np.zeros((1, union), bool)
    b = np.zeros((1, union), bool)
    a[0, :inter] = True
    b[0, :union] = True
    return a, b


def test_iou_just_above_threshold_hits():
    det, gt = _pair_with_iou(41, 100)
    assert iou(det, gt) == 0.41
    assert match_detections([det], [gt]) == [True]


def test_iou_exactly_threshold_misses():
    det, gt = _pair_with_iou(40, 100)
    assert iou(det, gt) == HIT_IOU
    assert match_detections([det], [gt]) == [False]


def test_ground_truth_claimed_once():
    gt = _mask([(0, 10, 0, 10)])
    det = _mask([(0, 9, 0, 10)])
    assert match_detections([det, det], [gt]) == [True, False]


def test_match_prefers_best_unclaimed():
    g1, g2 = _mask([(0, 10, 0, 10)]), _mask([(0, 10, 8, 18)])
    det = _mask([(0, 10, 7, 17)])
    assert match_detections([det, g1], [g1, g2]) == [True, True]


def test_score_image_orders_by_cost():
    gt = _mask([(0, 10, 0, 10)])
    good, bad = gt.copy(), _mask([(0, 2, 18, 20)])
    scored = score_image([0.5, -0.1], [good, bad], [gt])
    assert [(s.cost, s.hit) for s in scored] == [(-0.1, False), (0.5, True)]


# -- PR curve ----------------------------------------------------------------------


def test_hand_enumerated_sweep():
    scored = [ScoredDetection(-0.5, True), ScoredDetection(-0.3, False), ScoredDetection(-0.1, True)]
    curve = pr_curve(scored, 2)
    assert [(p, r) for _, p, r in curve.points[1:]] == [(1.0, 0.5), (0.5, 0.5), (2 / 3, 1.0)]
    assert curve.points[0] == (-math.inf, 1.0, 0.0)
    assert curve.ap == pytest.approx(0.5 * 1.0 + 0.5 * (0.5 + 2 / 3) / 2)


def test_all_hits_precision_one():
    curve = pr_curve([ScoredDetection(c, True) for c in (-3.0, -2.0, -1.0)], 3)
    assert all(p == 1.0 for _, p, _ in curve.points)
    assert curve.ap == 1.0


def test_tied_costs_enter_together():
    curve = pr_curve([ScoredDetection(-1.0, True), ScoredDetection(-1.0, False)], 1)
    assert curve.points[1:] == ((-1.0, 0.5, 1.0),)


def test_zero_ground_truth():
    with pytest.raises(InputError):
        pr_curve([ScoredDetection(0.0, False)], 0)


def test_nonfinite_cost():
    with pytest.raises(InputError):
        pr_curve([ScoredDetection(math.nan, True)], 1)


def test_no_detections():
    curve = pr_curve([], 3)
    assert curve.points == ((-math.inf, 1.0, 0.0),) and curve.ap == 0.0


@given(st.lists(st.tuples(st.floats(-5, 5), st.booleans()), max_size=30), st.integers(1, 40))
def test_ap_in_unit_interval(items, extra):
    n_hits = sum(h for _, h in items)
    curve = pr_curve([ScoredDetection(c, h) for c, h in items], n_hits + extra)
    assert 0.0 <= curve.ap <= 1.0
    recalls = [r for _, _, r in curve.points]
    assert recalls == sorted(recalls)


@given(st.lists(st.tuples(st.integers(-40, 40).map(lambda k: k / 8), st.booleans()), min_size=1, max_size=30))
def test_monotone_cost_transform_keeps_curve(items):
    n = max(1, sum(h for _, h in items))
    a = pr_curve([ScoredDetection(c, h) for c, h in items], n)
    b = pr_curve([ScoredDetection(math.exp(c) * 3 - 1, h) for c, h in items], n)
    assert [(p, r) for _, p, r in a.points] == [(p, r) for _, p, r in b.points]
    assert a.ap == b.ap


def test_ground_truth_as_detections_gives_ap_one(scene):
    gts = [p.mask for p in scene.parts]
    scored = score_image([-1.0 - k for k in range(len(gts))], gts, gts)
    assert pr_curve(scored, len(gts)).ap == 1.0


def test_csv_and_plot(tmp_path):
    curve = pr_curve([ScoredDetection(-0.5, True), ScoredDetection(0.25, False)], 2)
    curve.write_csv(tmp_path / "pr.csv")
    lines = (tmp_path / "pr.csv").read_text().splitlines()
    assert lines[0] == "threshold,precision,recall"
    assert lines[1] == "-inf,1.0,0.0" and lines[2] == "-0.5,1.0,0.5"
    save_pr_plot(curve, tmp_path / "pr.png", "x")
    assert (tmp_path / "pr.png").stat().st_size > 0


# -- AUC ------------------------------------------------------------------------


def test_auc_examples():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [False, False, True, True]) == 1.0
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [False, False, True, True]) == 0.0
    assert roc_auc([0.5, 0.5], [True, False]) == 0.5
    with pytest.raises(InputError):
        roc_auc([0.1], [True])
