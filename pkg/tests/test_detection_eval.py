import numpy as np
import pytest
from hypothesis import given, strategies as st

from detrk.detection_eval import (Detection, GroundTruth, IOU_THRESHOLDS, average_precision, class_ap,
                                  map_range, match_at_threshold, size_bucket)
from detrk.fixtures import golden_fixture, perfect_fixture
from detrk.oracles import naive_report, pr_enumeration_ap
from detrk.pipeline.io import detections_to_json, groundtruth_to_json, parse_detections, parse_groundtruth
from detrk.set_matching import BoundingBox

GT = GroundTruth("a", BoundingBox(0.5, 0.5, 0.4, 0.4), 0, 1600.0)


def _det(box, score, img="a", cls=0):
    return Detection(img, box, score, cls)


def test_perfect_overlap_tp_everywhere():
    for t in IOU_THRESHOLDS:
        assert match_at_threshold([_det(GT.box, 0.9)], [GT], t).outcomes == [True]


def test_threshold_comparison():
    d = _det(BoundingBox(0.54, 0.5, 0.4, 0.4), 0.9)     # IoU 0.36/0.44 = 0.818
    shifted = _det(BoundingBox(0.5 + 0.4 / 4, 0.5, 0.4, 0.4), 0.9)
    assert match_at_threshold([shifted], [GT], 0.5).outcomes == [True]
    assert match_at_threshold([shifted], [GT], 0.75).outcomes == [False]
    assert match_at_threshold([d], [GT], 0.8).outcomes == [True]


def test_duplicate_rule():
    hi = _det(BoundingBox(0.52, 0.5, 0.4, 0.4), 0.8)
    lo = _det(GT.box, 0.6)
    res = match_at_threshold([lo, hi], [GT], 0.5)
    assert res.scores == [0.8, 0.6] and res.outcomes == [True, False]


def test_ignored_ground_truth():
    res = match_at_threshold([_det(GT.box, 0.9)], [GT], 0.5, "small")
    assert res.outcomes == [None] and res.n_gt == 0


def test_size_buckets():
    assert size_bucket(1023.9) == "small"
    assert size_bucket(1024.0) == "medium"
    assert size_bucket(4096.0) == "medium"
    assert size_bucket(4096.1) == "large"


def test_ap_examples():
    assert average_precision([True, True], 2) == 1.0
    assert average_precision([False], 1) == 0.0
    assert average_precision([True, False, True], 2) == pytest.approx(pr_enumeration_ap([True, False, True], 2),
                                                                      abs=1e-9)
    assert average_precision([], 0) is None
    assert average_precision([False], 0) == 0.0
    assert average_precision([], 3) == 0.0


@given(st.lists(st.booleans(), max_size=40), st.integers(0, 10))
def test_ap_matches_enumeration(outcomes, extra):
    n_gt = sum(outcomes) + extra
    if n_gt == 0:
        return
    assert average_precision(outcomes, n_gt) == pytest.approx(pr_enumeration_ap(outcomes, n_gt), abs=1e-12)


def test_golden_fixture():
    fx = golden_fixture()
    report = map_range(parse_detections(fx["detections"]), parse_groundtruth(fx["groundtruth"]))
    for key, want in fx["expected"].items():
        assert report.metrics()[key] == pytest.approx(want, abs=1e-9), key
    assert fx["expected"]["mAP50"] == pytest.approx((76.4 / 101 + 56 / 101) / 2, abs=1e-12)
    assert fx["expected"]["AP_l"] == pytest.approx(0.4, abs=1e-12)


def test_perfect_detector():
    dets, gts = perfect_fixture()
    assert {size_bucket(g["pixel_area"]) for g in gts} == {"small", "medium", "large"}
    report = map_range(parse_detections(dets), parse_groundtruth(gts))
    assert all(v == 1.0 for v in report.metrics().values())


def test_empty_detections():
    _, gts = perfect_fixture()
    report = map_range([], parse_groundtruth(gts))
    assert all(v == 0.0 for v in report.metrics().values())


def test_empty_ground_truth_undefined():
    report = map_range([_det(GT.box, 0.5)], [])
    assert all(v is None for v in report.metrics().values())
    assert "n/a" in report.table()


def _random_set(seed):
    r = np.random.default_rng(seed)
    gts, dets = [], []
    for img in range(int(r.integers(1, 4))):
        for _ in range(int(r.integers(1, 5))):
            w, h = r.uniform(0.05, 0.5, 2)
            b = BoundingBox(*r.uniform(0.25, 0.75, 2), w, h)
            cls = int(r.integers(0, 2))
            gts.append(GroundTruth(f"i{img}", b, cls, b.area * 10000))
            if r.random() < 0.8:
                j = r.normal(0, 0.03, 4)
                dets.append(Detection(f"i{img}", BoundingBox(b.cx + j[0], b.cy + j[1], max(b.w + j[2], .01),
                                                             max(b.h + j[3], .01)), float(r.random()), cls))
        for _ in range(int(r.integers(0, 3))):
            dets.append(Detection(f"i{img}", BoundingBox(*r.uniform(0.2, 0.8, 2), *r.uniform(0.05, 0.4, 2)),
                                  float(r.random()), int(r.integers(0, 2))))
    return dets, gts


@given(st.integers(0, 10**6))
def test_report_matches_naive_evaluator(seed):
    dets, gts = _random_set(seed)
    got = map_range(dets, gts).metrics()
    want = naive_report(detections_to_json(dets), groundtruth_to_json(gts))
    for k in got:
        assert (got[k] is None) == (want[k] is None)
        if got[k] is not None:
            assert got[k] == pytest.approx(want[k], abs=1e-12)


@given(st.integers(0, 10**6))
def test_metric_properties(seed):
    dets, gts = _random_set(seed)
    report = map_range(dets, gts)
    assert all(v is None or 0.0 <= v <= 1.0 for v in report.metrics().values())
    for c in (0, 1):
        cd = [d for d in dets if d.class_id == c]
        cg = [g for g in gts if g.class_id == c]
        aps = [class_ap(cd, cg, t) for t in IOU_THRESHOLDS]
        assert all(a is None or b <= a + 1e-12 for a, b in zip(aps, aps[1:]))
    worse = map_range(dets + [Detection("i0", BoundingBox(0.5, 0.5, 0.1, 0.1), 0.0, 0)], gts)
    for k, v in worse.metrics().items():
        assert v is None or report.metrics()[k] is None or v <= report.metrics()[k] + 1e-12
    assert map_range(dets, gts) == report


def test_rejects_bad_threshold():
    with pytest.raises(ValueError):
        match_at_threshold([], [], 0.0)
    with pytest.raises(ValueError):
        Detection("a", GT.box, 1.5, 0)
