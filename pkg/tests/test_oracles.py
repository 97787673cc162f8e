"""The oracles themselves, checked against values worked out by hand."""

import numpy as np
import pytest

from detrk import oracles


def test_brute_force_assignment_hand_cases():
    assert oracles.brute_force_assignment([[1, 2], [2, 1]]) == 2.0
    assert oracles.brute_force_assignment([[4, 1, 3]]) == 1.0
    assert oracles.brute_force_assignment([[5], [1], [3]]) == 1.0
    assert oracles.brute_force_assignment([[1, 9, 9], [9, 9, 2], [9, 3, 9]]) == 6.0


def test_pr_enumeration_hand_cases():
    # TP, FP, TP with two ground truths: precision 1 up to recall 0.5, then 2/3
    assert oracles.pr_enumeration_ap([True, False, True], 2) == pytest.approx((51 + 50 * 2 / 3) / 101)
    assert oracles.pr_enumeration_ap([False, True], 1) == pytest.approx(0.5)


def test_naive_iou_hand_case():
    assert oracles.naive_iou([1, 1, 2, 2], [2, 2, 2, 2]) == pytest.approx(1 / 7)
    assert oracles.naive_iou([0, 0, 1, 1], [5, 5, 1, 1]) == 0.0


def test_naive_bilinear_hand_case():
    fmap = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    assert oracles.naive_bilinear(fmap, 0.5, 0.5)[0] == 2.5
    assert oracles.naive_bilinear(fmap, 1.5, 0.0)[0] == 1.0     # half of the right column is padding


def test_naive_depthwise_delta():
    x = np.arange(25.0).reshape(1, 5, 5)
    k = np.zeros((1, 3, 3))
    k[0, 1, 1] = 1.0
    assert np.array_equal(oracles.naive_depthwise_stride2(x, k), x[:, ::2, ::2])


def test_naive_report_perfect_and_empty():
    gts = [{"image_id": "a", "bbox": [0.5, 0.5, 0.2, 0.2], "class_id": 0, "pixel_area": 400.0}]
    dets = [{"image_id": "a", "bbox": [0.5, 0.5, 0.2, 0.2], "score": 1.0, "class_id": 0}]
    rep = oracles.naive_report(dets, gts)
    assert rep["mAP"] == 1.0 and rep["AP_s"] == 1.0 and rep["AP_m"] is None
    assert oracles.naive_report([], gts)["mAP"] == 0.0
