"""COCO-style detection metrics.

Detections are greedily matched to ground truth per (image, class) in order
of descending score; AP is the 101-point interpolated area under the
precision/recall curve; mAP averages over IoU thresholds 0.50:0.05:0.95 and
then over classes.  Size-stratified AP ignores (rather than drops) ground
truth outside the size bucket, COCO fashion.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .set_matching.boxes import BoundingBox, iou

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
SMALL_MAX = 32.0 ** 2
LARGE_MIN = 64.0 ** 2
METRIC_KEYS = ("mAP", "mAP50", "mAP75", "AP_s", "AP_m", "AP_l")


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: BoundingBox
    score: float
    class_id: int

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    box: BoundingBox
    class_id: int
    pixel_area: float

    def __post_init__(self):
        if not self.pixel_area > 0:
            raise ValueError(f"pixel_area must be positive, got {self.pixel_area}")


def size_bucket(pixel_area: float) -> str:
    """``small`` below 32^2, ``large`` above 64^2, ``medium`` otherwise (both boundaries included)."""
    if pixel_area < SMALL_MAX:
        return "small"
    if pixel_area > LARGE_MIN:
        return "large"
    return "medium"


def _in_range(area: float, area_rng: str) -> bool:
    return area_rng == "all" or size_bucket(area) == area_rng


@dataclass
class MatchResult:
    """Per-detection outcome in score order: ``True`` = TP, ``False`` = FP, ``None`` = ignored."""

    scores: list[float]
    outcomes: list[bool | None]
    n_gt: int


def match_at_threshold(dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_thresh: float,
                       area_rng: str = "all", pixel_scale: float | None = None) -> MatchResult:
    """Greedy matching for one image and one class.

    Each detection, in descending score order (stable), claims the unclaimed
    non-ignored ground truth of highest IoU at or above the threshold; failing
    that an ignored one, which makes the detection ignored too.  Unmatched
    detections whose pixel area falls outside ``area_rng`` are ignored as well
    when ``pixel_scale`` (pixels per unit normalised area) is known.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise ValueError(f"IoU threshold must lie in (0, 1], got {iou_thresh}")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    ignored_gt = [not _in_range(g.pixel_area, area_rng) for g in gts]
    claimed = [False] * len(gts)
    scores, outcomes = [], []
    for i in order:
        det = dets[i]
        ious = [iou(det.box, g.box) for g in gts]
        pick = None
        for want_ignored in (False, True):
            best = -1.0
            for j, ov in enumerate(ious):
                if claimed[j] or ignored_gt[j] != want_ignored or ov < iou_thresh:
                    continue
                if ov > best:
                    best, pick = ov, j
            if pick is not None:
                break
        if pick is not None:
            claimed[pick] = True
            outcome = None if ignored_gt[pick] else True
        elif pixel_scale is not None and not _in_range(det.box.area * pixel_scale, area_rng):
            outcome = None
        else:
            outcome = False
        scores.append(det.score)
        outcomes.append(outcome)
    return MatchResult(scores, outcomes, sum(not ig for ig in ignored_gt))


def average_precision(outcomes: Iterable[bool], n_gt: int) -> float | None:
    """101-point interpolated AP of a ranked TP/FP sequence.

    Returns ``None`` (undefined) when there is no ground truth and no
    detection, and 0 when there are detections but no ground truth.
    """
    tp = np.array([bool(o) for o in outcomes], dtype=np.float64)
    if n_gt == 0:
        return None if tp.size == 0 else 0.0
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / n_gt
    precision = ctp / (ctp + cfp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # slack so a recall of exactly 29/100 reaches the 0.29 point despite linspace rounding
    idx = np.searchsorted(recall, RECALL_POINTS - 1e-12, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(np.mean(sampled))


@dataclass
class EvalReport:
    mAP: float | None
    mAP50: float | None
    mAP75: float | None
    AP_s: float | None
    AP_m: float | None
    AP_l: float | None
    per_class: dict[int, dict[str, float | None]] = field(default_factory=dict)
    undefined: list[str] = field(default_factory=list)

    def metrics(self) -> dict[str, float | None]:
        return {k: getattr(self, k) for k in METRIC_KEYS}

    def to_json(self) -> dict:
        out = self.metrics()
        out["per_class"] = {str(c): v for c, v in sorted(self.per_class.items())}
        if self.undefined:
            out["undefined"] = list(self.undefined)
        return out

    def table(self) -> str:
        head = " ".join(f"{k:>8}" for k in METRIC_KEYS)
        row = " ".join(f"{'n/a':>8}" if v is None else f"{v:8.4f}" for v in self.metrics().values())
        return f"{head}\n{row}"


def _mean(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _pixel_scales(gts: Sequence[GroundTruth]) -> dict[str, float]:
    per_image: dict[str, list[float]] = defaultdict(list)
    for g in gts:
        per_image[g.image_id].append(g.pixel_area / g.box.area)
    return {k: float(np.median(v)) for k, v in per_image.items()}


def class_ap(dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_thresh: float,
             area_rng: str = "all", scales: dict[str, float] | None = None) -> float | None:
    """AP of one class over all images at one threshold and size bucket."""
    scales = _pixel_scales(gts) if scales is None else scales
    by_img_d: dict[str, list[Detection]] = defaultdict(list)
    by_img_g: dict[str, list[GroundTruth]] = defaultdict(list)
    for d in dets:
        by_img_d[d.image_id].append(d)
    for g in gts:
        by_img_g[g.image_id].append(g)
    ranked: list[tuple[float, int, bool]] = []
    n_gt = 0
    seq = 0
    for img in sorted(set(by_img_d) | set(by_img_g)):
        res = match_at_threshold(by_img_d[img], by_img_g[img], iou_thresh, area_rng, scales.get(img))
        n_gt += res.n_gt
        for s, o in zip(res.scores, res.outcomes):
            if o is not None:
                ranked.append((s, seq, o))
            seq += 1
    ranked.sort(key=lambda t: (-t[0], t[1]))
    return average_precision([o for _, _, o in ranked], n_gt)


def map_range(dets: Sequence[Detection], gts: Sequence[GroundTruth]) -> EvalReport:
    classes = sorted({g.class_id for g in gts} | {d.class_id for d in dets})
    if not gts:
        return EvalReport(None, None, None, None, None, None, {}, list(METRIC_KEYS))
    scales = _pixel_scales(gts)
    per_class: dict[int, dict[str, float | None]] = {}
    for c in classes:
        cd = [d for d in dets if d.class_id == c]
        cg = [g for g in gts if g.class_id == c]
        row = {}
        for area in ("all", "small", "medium", "large"):
            aps = [class_ap(cd, cg, t, area, scales) for t in IOU_THRESHOLDS]
            if area == "all":
                row["AP50"] = aps[0]
                row["AP75"] = aps[IOU_THRESHOLDS.index(0.75)]
                row["AP"] = _mean(aps)
            else:
                row[f"AP_{area[0]}"] = _mean(aps)
        per_class[c] = row
    report = EvalReport(
        mAP=_mean(r["AP"] for r in per_class.values()),
        mAP50=_mean(r["AP50"] for r in per_class.values()),
        mAP75=_mean(r["AP75"] for r in per_class.values()),
        AP_s=_mean(r["AP_s"] for r in per_class.values()),
        AP_m=_mean(r["AP_m"] for r in per_class.values()),
        AP_l=_mean(r["AP_l"] for r in per_class.values()),
        per_class=per_class,
    )
    report.undefined = [k for k, v in report.metrics().items() if v is None]
    return report
