from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .boxes import BoundingBox

MIN_EXTENT = 1e-4


@dataclass(frozen=True)
class NoisedQuery:
    box: BoundingBox
    label: int
    source_label: int

    @property
    def flipped(self) -> bool:
        return self.label != self.source_label


def _clamp_box(cx, cy, w, h) -> BoundingBox:
    x1, y1, x2, y2 = cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2
    if 0.0 <= x1 and x2 <= 1.0 and 0.0 <= y1 and y2 <= 1.0:
        return BoundingBox(cx, cy, w, h)
    x1, x2 = np.clip([x1, x2], 0.0, 1.0)
    y1, y2 = np.clip([y1, y2], 0.0, 1.0)
    if x2 - x1 < MIN_EXTENT:
        x1, x2 = min(x1, 1.0 - MIN_EXTENT), min(x1, 1.0 - MIN_EXTENT) + MIN_EXTENT
    if y2 - y1 < MIN_EXTENT:
        y1, y2 = min(y1, 1.0 - MIN_EXTENT), min(y1, 1.0 - MIN_EXTENT) + MIN_EXTENT
    return BoundingBox.from_corners(float(x1), float(y1), float(x2), float(y2))


def denoise_perturb(gts: Sequence[tuple[BoundingBox, int]], rng: np.random.Generator,
                    box_noise_scale: float = 0.4, label_flip_prob: float = 0.2,
                    num_classes: int = 2) -> list[NoisedQuery]:
    """Noised copies of ground-truth ``(box, label)`` pairs for denoising queries.

    Centres move uniformly within ``+-scale * (w/2, h/2)``, width and height are
    multiplied by a factor uniform in ``[1 - scale, 1 + scale]``, and each label
    is replaced by a different class with probability ``label_flip_prob``.
    """
    if not (0.0 <= box_noise_scale <= 1.0 and 0.0 <= label_flip_prob <= 1.0):
        raise ValueError("noise scales must lie in [0, 1]")
    out = []
    for box, label in gts:
        jitter = rng.uniform(-1.0, 1.0, 2)
        resize = rng.uniform(-1.0, 1.0, 2)
        flip = rng.random() < label_flip_prob
        other = int(rng.integers(1, num_classes)) if num_classes > 1 else 0
        cx = box.cx + jitter[0] * box_noise_scale * box.w / 2.0
        cy = box.cy + jitter[1] * box_noise_scale * box.h / 2.0
        w = max(box.w * (1.0 + resize[0] * box_noise_scale), MIN_EXTENT)
        h = max(box.h * (1.0 + resize[1] * box_noise_scale), MIN_EXTENT)
        new_label = (label + other) % num_classes if flip and num_classes > 1 else label
        out.append(NoisedQuery(_clamp_box(cx, cy, w, h), int(new_label), int(label)))
    return out
