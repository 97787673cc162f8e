"""Synthetic grayscale scenes with elliptical nodules and speckle noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..detection_eval import GroundTruth
from ..set_matching.boxes import BoundingBox
from .config import SceneSettings

BENIGN, MALIGNANT = 0, 1


@dataclass
class SyntheticScene:
    image_id: str
    image: np.ndarray           # 1 x H x W
    gts: list[GroundTruth]


def _smooth_field(rng: np.random.Generator, size: int, cells: int = 4) -> np.ndarray:
    coarse = rng.normal(0.0, 1.0, (cells, cells))
    idx = np.linspace(0, cells - 1, size)
    rows = np.array([np.interp(idx, np.arange(cells), r) for r in coarse])
    return np.array([np.interp(idx, np.arange(cells), c) for c in rows.T]).T


def gen_synthetic_scene(cfg: SceneSettings, rng: np.random.Generator, image_id: str = "scene-0",
                        num_nodules: int | None = None) -> SyntheticScene:
    """Benign nodules are bright, malignant ones dark; boxes are tight around each ellipse.

    The image is rendered at ``image_size`` but ``pixel_area`` is reported at
    ``source_size``, as if the scan had been resized for the network input.
    """
    S = cfg.image_size
    if S < 32:
        raise ValueError(f"image_size must be at least 32, got {S}")
    if num_nodules is None:
        num_nodules = int(rng.integers(cfg.min_nodules, cfg.max_nodules + 1))
    if num_nodules < 0:
        raise ValueError("nodule count must be nonnegative")
    yy, xx = np.mgrid[0:S, 0:S] + 0.5
    image = 0.45 + 0.05 * _smooth_field(rng, S)
    area_scale = (cfg.source_size / S) ** 2
    gts = []
    for _ in range(num_nodules):
        rx = float(rng.uniform(2.0, S / 5.0))
        ry = float(rng.uniform(2.0, S / 5.0))
        cx = float(rng.uniform(rx, S - rx))
        cy = float(rng.uniform(ry, S - ry))
        label = int(rng.integers(0, 2))
        inside = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        image = np.where(inside, 0.85 if label == BENIGN else 0.12, image)
        box = BoundingBox.from_corners((cx - rx) / S, (cy - ry) / S, (cx + rx) / S, (cy + ry) / S)
        gts.append(GroundTruth(image_id, box, label, pixel_area=4.0 * rx * ry * area_scale))
    speckle = rng.gamma(4.0, 0.25, (S, S))
    return SyntheticScene(image_id, (image * speckle)[None], gts)


def gen_scenes(cfg: SceneSettings, count: int, seed: int) -> list[SyntheticScene]:
    rng = np.random.default_rng(seed)
    return [gen_synthetic_scene(cfg, rng, f"scene-{i:04d}") for i in range(count)]
