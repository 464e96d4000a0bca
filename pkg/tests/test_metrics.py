import numpy as np
import pytest

from spraysim.detector import Detection
from spraysim.metrics import (ConfusionCounts, average_precision, detection_iou, evaluate, f1, iou,
                              match_and_count, mean_ap, pr_curve, precision, recall)


def _pixel_iou(a, b, size=20):
    """Brute-force IoU by rasterising integer boxes."""
    ga = np.zeros((size, size), bool)
    gb = np.zeros((size, size), bool)
    ga[a[1]:a[3], a[0]:a[2]] = True
    gb[b[1]:b[3], b[0]:b[2]] = True
    return (ga & gb).sum() / (ga | gb).sum()


def test_box_iou_one_third():
    a, b = (0, 0, 10, 10), (5, 0, 15, 10)
    assert iou(a, b) == pytest.approx(1 / 3)
    assert iou(a, b) == pytest.approx(_pixel_iou(a, b))


def test_iou_identical_and_disjoint():
    assert iou((0, 0, 4, 4), (0, 0, 4, 4)) == 1.0
    assert iou((0, 0, 4, 4), (5, 5, 8, 8)) == 0.0


def test_box_iou_matches_pixel_oracle_random():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a = sorted(rng.integers(0, 20, 2)), sorted(rng.integers(0, 20, 2))
        b = sorted(rng.integers(0, 20, 2)), sorted(rng.integers(0, 20, 2))
        if a[0][0] == a[0][1] or a[1][0] == a[1][1] or b[0][0] == b[0][1] or b[1][0] == b[1][1]:
            continue
        ba = (a[0][0], a[1][0], a[0][1], a[1][1])
        bb = (b[0][0], b[1][0], b[0][1], b[1][1])
        assert iou(ba, bb) == pytest.approx(_pixel_iou(ba, bb))


def test_mask_iou_grid_mismatch():
    with pytest.raises(ValueError):
        iou(np.ones((3, 3), bool), np.ones((3, 4), bool))


def test_detection_mask_iou_offsets():
    a = Detection((0, 0, 4, 4), mask=np.ones((4, 4), bool))
    b = Detection((2, 0, 6, 4), mask=np.ones((4, 4), bool))
    assert detection_iou(a, b, "mask") == pytest.approx(8 / 24)


def test_counts_from_reference_matrix():
    c = ConfusionCounts(26, 3, 1)
    assert precision(c) == pytest.approx(0.8966, abs=1e-4)
    assert recall(c) == pytest.approx(0.9630, abs=1e-4)
    assert f1(0.8966, 0.9630) == pytest.approx(0.9286, abs=1e-4)
    assert c.f1() == pytest.approx(0.9286, abs=1e-4)


def test_zero_denominators():
    c = ConfusionCounts()
    assert precision(c) == recall(c) == f1(0.0, 0.0) == 0.0


def test_match_one_on_one():
    t = [Detection((0, 0, 10, 10))]
    counts, _ = match_and_count([Detection((0, 0, 10, 10), 0.9)], t)
    assert counts == ConfusionCounts(1, 0, 0)


def test_two_preds_on_one_truth():
    t = [Detection((0, 0, 10, 10))]
    p = [Detection((0, 0, 10, 10), 0.9), Detection((0, 0, 10, 9), 0.8)]
    counts, matches = match_and_count(p, t)
    assert counts == ConfusionCounts(1, 1, 0)
    assert matches[0].pred == 0 and matches[1].truth is None


def test_class_mismatch_never_matches():
    counts, _ = match_and_count([Detection((0, 0, 5, 5), class_id=1)], [Detection((0, 0, 5, 5))])
    assert counts == ConfusionCounts(0, 1, 1)


def test_ap_hand_sweep():
    curve = pr_curve([0.9, 0.8, 0.7], [True, False, True], 2)
    assert average_precision(curve) == pytest.approx(0.5 + (2 / 3) * 0.5)


def test_ap_trivial_cases():
    assert average_precision(pr_curve([0.9], [True], 1)) == 1.0
    assert average_precision(pr_curve([0.9, 0.4], [False, False], 3)) == 0.0
    assert average_precision([]) == 0.0
    assert mean_ap([]) == 0.0


def test_evaluate_empty_predictions():
    rep = evaluate({}, {0: [Detection((0, 0, 5, 5))]})
    assert rep.map == 0.0 and rep.counts == ConfusionCounts(0, 0, 1)


def test_evaluate_identity_is_perfect():
    truths = {f: [Detection((f, 0, f + 10, 10))] for f in range(5)}
    rep = evaluate(truths, truths)
    r = rep.classes[0]
    assert (r.precision, r.recall, r.f1, rep.map) == (1.0, 1.0, 1.0, 1.0)


def test_evaluate_conf_threshold_only_affects_counts():
    t = {0: [Detection((0, 0, 10, 10))]}
    p = {0: [Detection((0, 0, 10, 10), 0.3)]}
    rep = evaluate(p, t, conf_threshold=0.5)
    assert rep.counts == ConfusionCounts(0, 0, 1)
    assert rep.map == 1.0
