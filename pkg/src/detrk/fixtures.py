"""Evaluation fixtures shipped with the package."""

from __future__ import annotations

import json
from importlib import resources


def golden_fixture() -> dict:
    """Three images, two classes; ``expected`` holds the frozen six-metric report."""
    return json.loads(resources.files("detrk").joinpath("data/golden_eval.json").read_text())


def perfect_fixture(image_side: float = 100.0) -> tuple[list[dict], list[dict]]:
    """Ground truth in every size bucket for both classes, detected exactly with score 1."""
    scale = image_side ** 2
    boxes = {
        0: [("p-1", [0.25, 0.25, 0.2, 0.2]), ("p-1", [0.7, 0.7, 0.45, 0.45]), ("p-2", [0.5, 0.5, 0.9, 0.9])],
        1: [("p-3", [0.2, 0.8, 0.15, 0.25]), ("p-3", [0.6, 0.4, 0.5, 0.6]), ("p-4", [0.5, 0.5, 0.8, 0.7])],
    }
    gts, dets = [], []
    for cls, items in boxes.items():
        for img, b in items:
            gts.append({"image_id": img, "bbox": b, "class_id": cls, "pixel_area": b[2] * b[3] * scale})
            dets.append({"image_id": img, "bbox": b, "score": 1.0, "class_id": cls})
    return dets, gts
