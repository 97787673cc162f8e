"""Box geometry, detection losses, exact bipartite matching and query denoising."""

from .boxes import BoundingBox, giou_loss, iou
from .denoise import NoisedQuery, denoise_perturb
from .hungarian import AssignmentResult, hungarian_match
from .losses import (LossWeights, Prediction, box_regression_loss, fit_box, focal_grad, focal_loss,
                     giou_grad, l1_box_loss, l1_grad, loss_gradients, pair_cost)
from .set_loss import cost_matrix, set_loss

__all__ = [
    "AssignmentResult", "BoundingBox", "LossWeights", "NoisedQuery", "Prediction",
    "box_regression_loss", "cost_matrix", "denoise_perturb", "fit_box", "focal_grad", "focal_loss",
    "giou_grad", "giou_loss", "hungarian_match", "iou", "l1_box_loss", "l1_grad", "loss_gradients",
    "pair_cost", "set_loss",
]
