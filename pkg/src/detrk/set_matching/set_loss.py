from __future__ import annotations

from typing import Sequence

import numpy as np

from .boxes import BoundingBox
from .hungarian import AssignmentResult, hungarian_match
from .losses import LossWeights, Prediction, focal_loss, pair_cost


def cost_matrix(preds: Sequence[Prediction], gts: Sequence[BoundingBox],
                weights: LossWeights = LossWeights()) -> np.ndarray:
    return np.array([[pair_cost(p, g, weights) for g in gts] for p in preds], dtype=np.float64)


def set_loss(preds: Sequence[Prediction], gts: Sequence[BoundingBox],
             weights: LossWeights = LossWeights()) -> tuple[float, AssignmentResult]:
    """Hungarian-matched set loss.

    Matched pairs contribute their full weighted cost, unmatched predictions
    only the background focal term.  The sum is divided by the number of
    matched pairs (at least 1).
    """
    if not preds:
        raise ValueError("set_loss needs at least one prediction")
    if not gts:
        background = sum(weights.focal * focal_loss(p.prob, -1, weights.gamma, weights.alpha)
                         for p in preds)
        return background, AssignmentResult([], 0.0, list(range(len(preds))))
    cost = cost_matrix(preds, gts, weights)
    result = hungarian_match(cost)
    background = sum(weights.focal * focal_loss(preds[i].prob, -1, weights.gamma, weights.alpha)
                     for i in result.unmatched_predictions)
    return (result.total_cost + background) / max(len(result.pairs), 1), result
