"""Hierarchical feature fusion over a four-level pyramid.

Backbone stages are projected to a common width (P1..P4, finest first) and
fused bottom-up: ``F1 = P1`` and ``F_i = P_i + sc_down(F_{i-1})``, where
``sc_down`` is a 1x1 channel mix followed by a stride-2 depthwise 3x3 conv.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor_core import DimensionError, conv2d

STRIDE = 2
PADDING = 1
KERNEL = 3


class ShapeChainError(DimensionError):
    def __init__(self, level: int, message: str):
        super().__init__(f"level {level}: {message}")
        self.level = level


@dataclass
class ScDownParams:
    pointwise_weight: np.ndarray          # Cout x Cin
    depthwise_weight: np.ndarray          # Cout x 3 x 3
    pointwise_bias: np.ndarray | None = None
    depthwise_bias: np.ndarray | None = None

    def __post_init__(self):
        self.pointwise_weight = np.asarray(self.pointwise_weight, dtype=np.float64)
        self.depthwise_weight = np.asarray(self.depthwise_weight, dtype=np.float64)
        cout = self.pointwise_weight.shape[0]
        if self.pointwise_weight.ndim != 2 or self.depthwise_weight.shape != (cout, KERNEL, KERNEL):
            raise DimensionError(
                f"sc_down weights inconsistent: pointwise {self.pointwise_weight.shape}, "
                f"depthwise {self.depthwise_weight.shape}")

    @property
    def in_channels(self) -> int:
        return self.pointwise_weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.pointwise_weight.shape[0]

    @classmethod
    def init(cls, cin: int, cout: int, rng: np.random.Generator, bias: bool = False) -> "ScDownParams":
        pw = rng.normal(0.0, 1.0 / math.sqrt(cin), (cout, cin))
        dw = rng.normal(0.0, 1.0 / KERNEL, (cout, KERNEL, KERNEL))
        if bias:
            return cls(pw, dw, np.zeros(cout), np.zeros(cout))
        return cls(pw, dw)

    @classmethod
    def zeros(cls, cin: int, cout: int) -> "ScDownParams":
        return cls(np.zeros((cout, cin)), np.zeros((cout, KERNEL, KERNEL)))


def down_shape(H: int, W: int) -> tuple[int, int]:
    return -(-H // 2), -(-W // 2)


def depthwise_conv(x: np.ndarray, kernels: np.ndarray, stride: int = STRIDE,
                   padding: int = PADDING) -> np.ndarray:
    C, H, W = x.shape
    k = kernels.shape[-1]
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1
    out = np.zeros((C, Ho, Wo))
    for a in range(k):
        for b in range(k):
            patch = xp[:, a:a + stride * (Ho - 1) + 1:stride, b:b + stride * (Wo - 1) + 1:stride]
            out += kernels[:, a, b][:, None, None] * patch
    return out


def sc_down(F: np.ndarray, params: ScDownParams) -> np.ndarray:
    """Pointwise channel mix, then depthwise 3x3 / stride 2 / pad 1."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 3 or F.shape[0] != params.in_channels:
        raise DimensionError(f"sc_down expects {params.in_channels} input channels, got {F.shape}")
    mixed = np.einsum("oc,chw->ohw", params.pointwise_weight, F)
    if params.pointwise_bias is not None:
        mixed += params.pointwise_bias[:, None, None]
    out = depthwise_conv(mixed, params.depthwise_weight)
    if params.depthwise_bias is not None:
        out += params.depthwise_bias[:, None, None]
    return out


def group_norm(x: np.ndarray, groups: int, eps: float = 1e-5,
               scale: np.ndarray | None = None, shift: np.ndarray | None = None) -> np.ndarray:
    D, H, W = x.shape
    if groups < 1 or D % groups:
        raise ValueError(f"{groups} groups do not divide {D} channels")
    g = x.reshape(groups, -1)
    mu = g.mean(axis=1, keepdims=True)
    var = g.var(axis=1, keepdims=True)
    out = ((g - mu) / np.sqrt(var + eps)).reshape(D, H, W)
    if scale is not None:
        out = out * np.asarray(scale)[:, None, None]
    if shift is not None:
        out = out + np.asarray(shift)[:, None, None]
    return out


def clip_groups(groups: int, D: int) -> int:
    """Largest divisor of D that does not exceed ``groups``."""
    return max(g for g in range(1, min(groups, D) + 1) if D % g == 0)


def project_level(S: np.ndarray, proj_weight: np.ndarray, group_norm_groups: int = 32,
                  eps: float = 1e-5) -> np.ndarray:
    """Channel projection followed by GroupNorm.

    ``proj_weight`` of shape D x C is a 1x1 projection; shape D x C x 3 x 3 is
    the 3x3 (zero padding 1, stride 1) variant used on the coarsest stage.
    """
    S = np.asarray(S, dtype=np.float64)
    proj_weight = np.asarray(proj_weight, dtype=np.float64)
    if S.ndim != 3:
        raise DimensionError(f"expected C x H x W, got {S.shape}")
    D = proj_weight.shape[0]
    if D % group_norm_groups:
        raise ValueError(f"{group_norm_groups} groups do not divide {D} channels")
    if proj_weight.ndim == 2:
        if proj_weight.shape[1] != S.shape[0]:
            raise DimensionError(f"projection {proj_weight.shape} vs input {S.shape}")
        y = np.einsum("dc,chw->dhw", proj_weight, S)
    elif proj_weight.ndim == 4:
        y = conv2d(S, proj_weight, stride=1, padding=(proj_weight.shape[-1] - 1) // 2)
    else:
        raise DimensionError(f"unsupported projection weight shape {proj_weight.shape}")
    return group_norm(y, group_norm_groups, eps)


def check_shape_chain(levels: list[np.ndarray]) -> None:
    for i in range(1, len(levels)):
        expected = down_shape(*levels[i - 1].shape[1:])
        if levels[i].shape[1:] != expected:
            raise ShapeChainError(
                i, f"spatial {levels[i].shape[1:]} != ceil-half of previous {expected}")


def hff_fuse(P: list[np.ndarray], down_params: list[ScDownParams]) -> list[np.ndarray]:
    """Bottom-up fusion; returns F with the same shapes as P."""
    if len(P) < 2:
        raise ValueError("hff_fuse needs at least two pyramid levels")
    if len(down_params) != len(P) - 1:
        raise ValueError(f"need {len(P) - 1} sc_down parameter sets, got {len(down_params)}")
    P = [np.asarray(p, dtype=np.float64) for p in P]
    check_shape_chain(P)
    F = [P[0]]
    for i in range(1, len(P)):
        prm = down_params[i - 1]
        if prm.out_channels != P[i].shape[0] or prm.in_channels != F[-1].shape[0]:
            raise ShapeChainError(i, f"sc_down maps {prm.in_channels}->{prm.out_channels} channels, "
                                     f"levels have {F[-1].shape[0]}->{P[i].shape[0]}")
        F.append(P[i] + sc_down(F[-1], prm))
    return F
