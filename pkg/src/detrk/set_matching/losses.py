"""Focal, L1 and GIoU losses for a single prediction/target pair, with gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boxes import BoundingBox, giou_loss

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    focal: float = 2.0
    l1: float = 5.0
    giou: float = 2.0
    gamma: float = 2.0
    alpha: float | None = None      # optional class balancing, off by default
    l1_reduction: str = "mean"      # "mean" over the 4 coordinates, or "sum"

    def __post_init__(self):
        if min(self.focal, self.l1, self.giou, self.gamma) < 0:
            raise ValueError("loss weights and gamma must be nonnegative")
        if self.l1_reduction not in ("mean", "sum"):
            raise ValueError(f"l1_reduction must be 'mean' or 'sum', got {self.l1_reduction!r}")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(self.focal * factor, self.l1 * factor, self.giou * factor,
                           self.gamma, self.alpha, self.l1_reduction)


@dataclass(frozen=True)
class Prediction:
    box: BoundingBox
    prob: float

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"probability must lie in [0, 1], got {self.prob}")


def _clamp(p: float) -> float:
    return min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)


def focal_loss(p: float, y: int, gamma: float = 2.0, alpha: float | None = None) -> float:
    """``-(1 - p_t)^gamma * ln(p_t)`` with ``p_t = p`` for y=+1 and ``1 - p`` for y=-1."""
    if y not in (1, -1):
        raise ValueError(f"label must be +1 or -1, got {y}")
    p = _clamp(p)
    pt = p if y == 1 else 1.0 - p
    loss = -((1.0 - pt) ** gamma) * math.log(pt)
    if alpha is not None:
        loss *= alpha if y == 1 else 1.0 - alpha
    return loss


def focal_grad(p: float, y: int, gamma: float = 2.0, alpha: float | None = None) -> float:
    """d focal_loss / d p; zero where the clamp is active."""
    if not PROB_CLAMP < p < 1.0 - PROB_CLAMP:
        return 0.0
    pt = p if y == 1 else 1.0 - p
    dpt = gamma * (1.0 - pt) ** (gamma - 1.0) * math.log(pt) - (1.0 - pt) ** gamma / pt
    g = dpt if y == 1 else -dpt
    if alpha is not None:
        g *= alpha if y == 1 else 1.0 - alpha
    return g


def l1_box_loss(pred: BoundingBox, gt: BoundingBox, reduction: str = "mean") -> float:
    diff = sum(abs(a - b) for a, b in zip(pred.as_list(), gt.as_list()))
    return diff / 4.0 if reduction == "mean" else diff


def l1_grad(pred: BoundingBox, gt: BoundingBox, reduction: str = "mean") -> np.ndarray:
    """Sign pattern of the difference; ties get +1 (right-sided subgradient)."""
    d = np.array(pred.as_list()) - np.array(gt.as_list())
    g = np.where(d >= 0, 1.0, -1.0)
    return g / 4.0 if reduction == "mean" else g


def giou_grad(pred: BoundingBox, gt: BoundingBox) -> np.ndarray:
    """d giou_loss / d (cx, cy, w, h) of the prediction.

    Ties between prediction and target edges attribute the max/min to the
    prediction, which gives a one-sided subgradient.
    """
    px1, py1, px2, py2 = pred.corners
    gx1, gy1, gx2, gy2 = gt.corners
    pw, ph = px2 - px1, py2 - py1

    def axis(p1, p2, g1, g2):
        # overlap length, hull length and their partials w.r.t. (p1, p2)
        lo, hi = max(p1, g1), min(p2, g2)
        ov = hi - lo
        if ov > 0:
            dov = (-1.0 if p1 >= g1 else 0.0, 1.0 if p2 <= g2 else 0.0)
        else:
            ov, dov = 0.0, (0.0, 0.0)
        hull = max(p2, g2) - min(p1, g1)
        dhull = (-1.0 if p1 <= g1 else 0.0, 1.0 if p2 >= g2 else 0.0)
        return ov, dov, hull, dhull

    iw, diw, cw, dcw = axis(px1, px2, gx1, gx2)
    ih, dih, ch, dch = axis(py1, py2, gy1, gy2)
    inter = iw * ih
    union = pw * ph + gt.area - inter
    hull = cw * ch

    # partials w.r.t. corners (x1, x2, y1, y2)
    d_inter = np.array([diw[0] * ih, diw[1] * ih, dih[0] * iw, dih[1] * iw])
    d_area = np.array([-ph, ph, -pw, pw])
    d_hull = np.array([dcw[0] * ch, dcw[1] * ch, dch[0] * cw, dch[1] * cw])
    d_union = d_area - d_inter
    # loss = 2 - inter/union - union/hull
    d_loss = (-(d_inter * union - inter * d_union) / union ** 2
              - (d_union * hull - union * d_hull) / hull ** 2)
    dx1, dx2, dy1, dy2 = d_loss
    return np.array([dx1 + dx2, dy1 + dy2, (dx2 - dx1) / 2.0, (dy2 - dy1) / 2.0])


def pair_cost(pred: Prediction, gt: BoundingBox, weights: LossWeights = LossWeights(), y: int = 1) -> float:
    """Weighted focal + L1 + GIoU for one pair; used both as matching cost and loss."""
    return (weights.focal * focal_loss(pred.prob, y, weights.gamma, weights.alpha)
            + weights.l1 * l1_box_loss(pred.box, gt, weights.l1_reduction)
            + weights.giou * giou_loss(pred.box, gt))


def loss_gradients(pred: Prediction, gt: BoundingBox, weights: LossWeights = LossWeights(),
                   y: int = 1) -> np.ndarray:
    """Gradient of :func:`pair_cost` over ``(cx, cy, w, h, p)``."""
    box = weights.l1 * l1_grad(pred.box, gt, weights.l1_reduction) + weights.giou * giou_grad(pred.box, gt)
    dp = weights.focal * focal_grad(pred.prob, y, weights.gamma, weights.alpha)
    return np.append(box, dp)


def box_regression_loss(pred: BoundingBox, gt: BoundingBox, weights: LossWeights = LossWeights()) -> float:
    return weights.l1 * l1_box_loss(pred, gt, weights.l1_reduction) + weights.giou * giou_loss(pred, gt)


def fit_box(start: BoundingBox, target: BoundingBox, weights: LossWeights = LossWeights(),
            step: float = 1e-2, decay: float = 0.999, max_steps: int = 5000,
            tol: float = 1e-3, min_size: float = 1e-4):
    """Gradient descent of the box-regression terms from ``start`` toward ``target``.

    The step shrinks geometrically by ``decay`` each iteration: both terms have
    a kink at the optimum, so a constant step ends in a limit cycle of width
    about ``step * weight``.  Returns ``(box, steps_taken, final_l1)``.
    """
    x = np.array(start.as_list())
    lr = step
    for it in range(max_steps + 1):
        box = BoundingBox(*x)
        l1 = l1_box_loss(box, target)
        if l1 < tol:
            return box, it, l1
        if it == max_steps:
            break
        g = weights.l1 * l1_grad(box, target, weights.l1_reduction) + weights.giou * giou_grad(box, target)
        x = x - lr * g
        x[2:] = np.maximum(x[2:], min_size)
        lr *= decay
    return BoundingBox(*x), max_steps, l1_box_loss(BoundingBox(*x), target)
