"""Dense-array substrate shared by every other module.

Tensors are plain float64 ``numpy.ndarray`` objects in row-major order.  Feature
maps are channel-first (C x H x W).  Nothing here keeps state; callers pass an
explicit ``numpy.random.Generator`` wherever randomness is needed.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes do not conform."""


class Point2D(NamedTuple):
    """Continuous pixel coordinate on one feature map (x horizontal, y vertical)."""

    x: float
    y: float


def as_tensor(values, shape: Sequence[int] | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(tuple(shape))
    if arr.ndim and any(s <= 0 for s in arr.shape):
        raise DimensionError(f"tensor extents must be positive, got {arr.shape}")
    return arr


def linear(x: np.ndarray, W: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """``out[j] = sum_k W[j, k] x[k] + b[j]``."""
    x = np.asarray(x, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or x.ndim != 1 or W.shape[1] != x.shape[0]:
        raise DimensionError(f"linear: W {W.shape} incompatible with x {x.shape}")
    out = W @ x
    if b is not None:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (W.shape[0],):
            raise DimensionError(f"linear: bias {b.shape} != ({W.shape[0]},)")
        out = out + b
    return out


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def inverse_sigmoid(p, eps: float = 1e-6):
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    return np.log(p) - np.log1p(-p)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def layer_norm(x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def _check_map(fmap: np.ndarray) -> np.ndarray:
    fmap = np.asarray(fmap, dtype=np.float64)
    if fmap.ndim != 3:
        raise DimensionError(f"feature map must be C x H x W, got shape {fmap.shape}")
    return fmap


def _corners(x: float, y: float):
    x0 = math.floor(x)
    y0 = math.floor(y)
    return x0, y0, x - x0, y - y0


def _pixel(fmap: np.ndarray, yi: int, xi: int) -> np.ndarray:
    _, H, W = fmap.shape
    if 0 <= yi < H and 0 <= xi < W:
        return fmap[:, yi, xi]
    return np.zeros(fmap.shape[0])


def bilinear_sample(fmap: np.ndarray, p) -> np.ndarray:
    """Bilinearly interpolate a C x H x W map at continuous point ``p = (x, y)``.

    Pixel centres sit on integer coordinates.  Neighbours outside the map read
    as zero, so a point far outside returns the zero vector.
    """
    fmap = _check_map(fmap)
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"sampling point must be finite, got {(x, y)}")
    x0, y0, wx, wy = _corners(x, y)
    v00 = _pixel(fmap, y0, x0)
    v01 = _pixel(fmap, y0, x0 + 1)
    v10 = _pixel(fmap, y0 + 1, x0)
    v11 = _pixel(fmap, y0 + 1, x0 + 1)
    return ((1.0 - wy) * ((1.0 - wx) * v00 + wx * v01)
            + wy * ((1.0 - wx) * v10 + wx * v11))


def bilinear_sample_grad(fmap: np.ndarray, p, upstream: np.ndarray):
    """Gradients of ``<upstream, bilinear_sample(fmap, p)>``.

    Returns ``(grad_map, (d/dx, d/dy))``.  On integer coordinates the cell to
    the right/below is used (``floor``), which makes the subgradient one-sided
    and deterministic.
    """
    fmap = _check_map(fmap)
    upstream = np.asarray(upstream, dtype=np.float64)
    C, H, W = fmap.shape
    if upstream.shape != (C,):
        raise DimensionError(f"upstream {upstream.shape} != ({C},)")
    x, y = float(p[0]), float(p[1])
    x0, y0, wx, wy = _corners(x, y)
    grad_map = np.zeros_like(fmap)
    taps = (
        (y0, x0, (1.0 - wy) * (1.0 - wx)),
        (y0, x0 + 1, (1.0 - wy) * wx),
        (y0 + 1, x0, wy * (1.0 - wx)),
        (y0 + 1, x0 + 1, wy * wx),
    )
    for yi, xi, w in taps:
        if 0 <= yi < H and 0 <= xi < W:
            grad_map[:, yi, xi] += w * upstream
    s00 = upstream @ _pixel(fmap, y0, x0)
    s01 = upstream @ _pixel(fmap, y0, x0 + 1)
    s10 = upstream @ _pixel(fmap, y0 + 1, x0)
    s11 = upstream @ _pixel(fmap, y0 + 1, x0 + 1)
    gx = (1.0 - wy) * (s01 - s00) + wy * (s11 - s10)
    gy = (1.0 - wx) * (s10 - s00) + wx * (s11 - s01)
    return grad_map, (float(gx), float(gy))


def bilinear_sample_many(fmap: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorised :func:`bilinear_sample`; returns ``xs.shape + (C,)``."""
    fmap = _check_map(fmap)
    C, H, W = fmap.shape
    flat = fmap.reshape(C, H * W).T
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    wx = (xs - x0)[..., None]
    wy = (ys - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    def gather(yi, xi):
        ok = (yi >= 0) & (yi < H) & (xi >= 0) & (xi < W)
        idx = np.where(ok, yi * W + xi, 0)
        return flat[idx] * ok[..., None]

    return ((1.0 - wy) * ((1.0 - wx) * gather(y0, x0) + wx * gather(y0, x0 + 1))
            + wy * ((1.0 - wx) * gather(y0 + 1, x0) + wx * gather(y0 + 1, x0 + 1)))


def conv2d(x: np.ndarray, weight: np.ndarray, stride: int = 1, padding: int = 0,
           bias: np.ndarray | None = None) -> np.ndarray:
    """Dense 2D cross-correlation, C_in x H x W with weight C_out x C_in x k x k."""
    x = _check_map(x)
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 4 or weight.shape[1] != x.shape[0]:
        raise DimensionError(f"conv2d: weight {weight.shape} vs input {x.shape}")
    _, H, W = x.shape
    kh, kw = weight.shape[2:]
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    out = np.zeros((weight.shape[0], Ho, Wo))
    for a in range(kh):
        for b in range(kw):
            patch = xp[:, a:a + stride * (Ho - 1) + 1:stride, b:b + stride * (Wo - 1) + 1:stride]
            out += np.einsum("oc,chw->ohw", weight[:, :, a, b], patch)
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[:, None, None]
    return out


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        g[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(a, b, floor: float = 1e-6) -> float:
    """Max elementwise ``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
