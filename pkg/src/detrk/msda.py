"""Multi-scale deformable attention.

For a query vector ``z`` with normalised reference point ``ref``::

    out = sum_h Wout[h] @ sum_l sum_k A[h,l,k] * Wval[h] @ x_l(phi_l(ref) + off[h,l,k])

``off`` and ``A`` are linear in ``z``; ``A`` is softmax-normalised over the joint
(level, point) axis of each head.  Offsets are in pixels of the level they
sample.  ``x_l(.)`` is zero-padded bilinear sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .tensor_core import DimensionError, Point2D, bilinear_sample, bilinear_sample_grad, softmax


@dataclass
class ReferencePoint:
    x: float
    y: float

    def __post_init__(self):
        self.x = min(max(float(self.x), 0.0), 1.0)
        self.y = min(max(float(self.y), 0.0), 1.0)


@dataclass
class MsdaParams:
    heads: int
    levels: int
    points: int
    d_model: int
    value_proj: np.ndarray      # heads x head_dim x d
    output_proj: np.ndarray     # heads x d x head_dim
    offset_weight: np.ndarray   # (heads*levels*points*2) x d
    offset_bias: np.ndarray
    attn_weight: np.ndarray     # (heads*levels*points) x d
    attn_bias: np.ndarray

    ARRAYS = ("value_proj", "output_proj", "offset_weight", "offset_bias",
              "attn_weight", "attn_bias")

    def __post_init__(self):
        H, L, K, d = self.heads, self.levels, self.points, self.d_model
        if min(H, L, K, d) < 1 or d % H:
            raise DimensionError(f"d_model={d} must be divisible by heads={H}")
        hd = d // H
        expected = {
            "value_proj": (H, hd, d),
            "output_proj": (H, d, hd),
            "offset_weight": (H * L * K * 2, d),
            "offset_bias": (H * L * K * 2,),
            "attn_weight": (H * L * K, d),
            "attn_bias": (H * L * K,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.ARRAYS}

    def replace(self, **arrays) -> "MsdaParams":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(arrays)
        return MsdaParams(**kw)

    @classmethod
    def init(cls, d_model: int = 64, heads: int = 8, levels: int = 4, points: int = 4,
             rng: np.random.Generator | None = None, offset_scale: float = 0.0,
             ) -> "MsdaParams":
        """Random projections; offset bias follows the usual radial initial pattern."""
        rng = rng if rng is not None else np.random.default_rng(0)
        H, L, K, d = heads, levels, points, d_model
        hd = d // H
        theta = 2.0 * math.pi * np.arange(H) / H
        grid = np.stack([np.cos(theta), np.sin(theta)], -1)
        grid = grid / np.abs(grid).max(-1, keepdims=True)
        ob = np.tile(grid[:, None, None, :], (1, L, K, 1)) * np.arange(1, K + 1)[None, None, :, None]
        return cls(
            H, L, K, d,
            value_proj=rng.normal(0.0, 1.0 / math.sqrt(d), (H, hd, d)),
            output_proj=rng.normal(0.0, 1.0 / math.sqrt(d), (H, d, hd)),
            offset_weight=rng.normal(0.0, offset_scale / math.sqrt(d), (H * L * K * 2, d)),
            offset_bias=ob.reshape(-1),
            attn_weight=rng.normal(0.0, 1.0 / math.sqrt(d), (H * L * K, d)),
            attn_bias=np.zeros(H * L * K),
        )

    @classmethod
    def random(cls, d_model: int, heads: int, levels: int, points: int,
               rng: np.random.Generator, scale: float = 1.0) -> "MsdaParams":
        """Fully random parameters, convenient for property and gradient checks."""
        H, L, K, d = heads, levels, points, d_model
        hd = d // H
        return cls(
            H, L, K, d,
            value_proj=rng.normal(0.0, scale, (H, hd, d)),
            output_proj=rng.normal(0.0, scale, (H, d, hd)),
            offset_weight=rng.normal(0.0, scale, (H * L * K * 2, d)),
            offset_bias=rng.normal(0.0, scale, H * L * K * 2),
            attn_weight=rng.normal(0.0, scale, (H * L * K, d)),
            attn_bias=rng.normal(0.0, scale, H * L * K),
        )


def identity_projections(heads: int, d_model: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-head slices of the identity, so that ``sum_h Wout[h] @ Wval[h] = I``."""
    hd = d_model // heads
    eye = np.eye(d_model)
    value = np.stack([eye[h * hd:(h + 1) * hd] for h in range(heads)])
    output = np.stack([eye[:, h * hd:(h + 1) * hd] for h in range(heads)])
    return value, output


def sampling_offsets_and_weights(z_q: np.ndarray, params: MsdaParams):
    """Returns ``offsets`` (H, L, K, 2) in pixels and ``weights`` (H, L, K)."""
    z_q = np.asarray(z_q, dtype=np.float64)
    if z_q.shape != (params.d_model,):
        raise DimensionError(f"query has shape {z_q.shape}, expected ({params.d_model},)")
    H, L, K = params.heads, params.levels, params.points
    offsets = (params.offset_weight @ z_q + params.offset_bias).reshape(H, L, K, 2)
    logits = (params.attn_weight @ z_q + params.attn_bias).reshape(H, L * K)
    weights = softmax(logits, axis=-1).reshape(H, L, K)
    return offsets, weights


def map_reference(ref: ReferencePoint, H_l: int, W_l: int) -> Point2D:
    """Normalised reference -> pixel-centre coordinates of an H_l x W_l map."""
    return Point2D(ref.x * W_l - 0.5, ref.y * H_l - 0.5)


def _check_pyramid(pyramid, params: MsdaParams) -> list[np.ndarray]:
    if len(pyramid) != params.levels:
        raise DimensionError(f"pyramid has {len(pyramid)} levels, params expect {params.levels}")
    out = []
    for i, x in enumerate(pyramid):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[0] != params.d_model:
            raise DimensionError(f"level {i} has shape {x.shape}, need {params.d_model} channels")
        out.append(x)
    return out


def _aggregate(z_q, bases, pyramid, params: MsdaParams) -> np.ndarray:
    offsets, weights = sampling_offsets_and_weights(z_q, params)
    out = np.zeros(params.d_model)
    for h in range(params.heads):
        acc = np.zeros(params.head_dim)
        for l, (x, base) in enumerate(zip(pyramid, bases)):
            for k in range(params.points):
                p = (base[0] + offsets[h, l, k, 0], base[1] + offsets[h, l, k, 1])
                acc += weights[h, l, k] * (params.value_proj[h] @ bilinear_sample(x, p))
        out += params.output_proj[h] @ acc
    return out


def deform_attn_head(z_q: np.ndarray, p_q, x: np.ndarray, params: MsdaParams) -> np.ndarray:
    """Single-level deformable attention around pixel point ``p_q``."""
    if params.levels != 1:
        raise DimensionError("deform_attn_head takes single-level parameters")
    (x,) = _check_pyramid([x], params)
    return _aggregate(z_q, [(float(p_q[0]), float(p_q[1]))], [x], params)


def ms_deform_attn(z_q: np.ndarray, ref: ReferencePoint, pyramid, params: MsdaParams) -> np.ndarray:
    pyramid = _check_pyramid(pyramid, params)
    bases = [map_reference(ref, x.shape[1], x.shape[2]) for x in pyramid]
    return _aggregate(z_q, bases, pyramid, params)


def ms_deform_attn_grad(z_q: np.ndarray, ref: ReferencePoint, pyramid, params: MsdaParams,
                        upstream: np.ndarray) -> dict:
    """Analytic gradient of ``<upstream, ms_deform_attn(...)>``.

    Returns a dict with keys ``z_q``, ``pyramid`` (list of arrays) and one key
    per parameter array of :class:`MsdaParams`.
    """
    pyramid = _check_pyramid(pyramid, params)
    z_q = np.asarray(z_q, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    H, L, K = params.heads, params.levels, params.points
    offsets, weights = sampling_offsets_and_weights(z_q, params)
    bases = [map_reference(ref, x.shape[1], x.shape[2]) for x in pyramid]

    samples = np.zeros((H, L, K, params.d_model))
    for h in range(H):
        for l in range(L):
            for k in range(K):
                p = (bases[l][0] + offsets[h, l, k, 0], bases[l][1] + offsets[h, l, k, 1])
                samples[h, l, k] = bilinear_sample(pyramid[l], p)
    values = np.einsum("hed,hlkd->hlke", params.value_proj, samples)
    agg = np.einsum("hlk,hlke->he", weights, values)

    d_output = np.einsum("d,he->hde", g, agg)
    d_agg = np.einsum("hde,d->he", params.output_proj, g)
    d_weights = np.einsum("he,hlke->hlk", d_agg, values)
    d_values = weights[..., None] * d_agg[:, None, None, :]
    d_value_proj = np.einsum("hlke,hlkd->hed", d_values, samples)
    d_samples = np.einsum("hlke,hed->hlkd", d_values, params.value_proj)

    d_pyramid = [np.zeros_like(x) for x in pyramid]
    d_offsets = np.zeros_like(offsets)
    for h in range(H):
        for l in range(L):
            for k in range(K):
                p = (bases[l][0] + offsets[h, l, k, 0], bases[l][1] + offsets[h, l, k, 1])
                gmap, (gx, gy) = bilinear_sample_grad(pyramid[l], p, d_samples[h, l, k])
                d_pyramid[l] += gmap
                d_offsets[h, l, k] = gx, gy

    w = weights.reshape(H, L * K)
    dw = d_weights.reshape(H, L * K)
    d_logits = (w * (dw - np.sum(w * dw, axis=1, keepdims=True))).reshape(-1)
    d_off = d_offsets.reshape(-1)
    return {
        "z_q": params.attn_weight.T @ d_logits + params.offset_weight.T @ d_off,
        "pyramid": d_pyramid,
        "value_proj": d_value_proj,
        "output_proj": d_output,
        "offset_weight": np.outer(d_off, z_q),
        "offset_bias": d_off,
        "attn_weight": np.outer(d_logits, z_q),
        "attn_bias": d_logits,
    }


def ms_deform_attn_batch(Z: np.ndarray, refs: np.ndarray, pyramid, params: MsdaParams) -> np.ndarray:
    """Vectorised over queries: ``Z`` is Q x d, ``refs`` is Q x 2 normalised (x, y).

    Projects values before sampling (bilinear sampling commutes with the
    channel projection), so agreement with :func:`ms_deform_attn` is to
    rounding, not bit-exact.
    """
    pyramid = _check_pyramid(pyramid, params)
    Z = np.asarray(Z, dtype=np.float64)
    refs = np.clip(np.asarray(refs, dtype=np.float64), 0.0, 1.0)
    Q = Z.shape[0]
    H, L, K, hd = params.heads, params.levels, params.points, params.head_dim
    offsets = (Z @ params.offset_weight.T + params.offset_bias).reshape(Q, H, L, K, 2)
    logits = (Z @ params.attn_weight.T + params.attn_bias).reshape(Q, H, L * K)
    weights = softmax(logits, axis=-1).reshape(Q, H, L, K)

    # Each table row holds the 2x2 neighbourhood (zero-padded) of one projected
    # value-map cell, so a sample needs a single gather.
    tables, starts, base = [], [], 0
    for x in pyramid:
        v = np.tensordot(params.value_proj, x, axes=([2], [0])).transpose(0, 2, 3, 1)
        v = np.pad(v, ((0, 0), (1, 1), (1, 1), (0, 0)))
        patches = np.concatenate([v[:, :-1, :-1], v[:, :-1, 1:], v[:, 1:, :-1], v[:, 1:, 1:]], axis=-1)
        tables.append(patches.reshape(-1, 4 * hd))
        starts.append(base)
        base += patches.shape[0] * patches.shape[1] * patches.shape[2]
    table = np.concatenate(tables)
    lvl = (slice(None), None)      # broadcast a per-level vector over (L, K)
    Hs = np.array([x.shape[1] for x in pyramid])[lvl]
    Ws = np.array([x.shape[2] for x in pyramid])[lvl]
    px = refs[:, 0, None, None, None] * Ws - 0.5 + offsets[..., 0]      # Q x H x L x K
    py = refs[:, 1, None, None, None] * Hs - 0.5 + offsets[..., 1]
    x0 = np.floor(px)
    y0 = np.floor(py)
    wx = px - x0
    wy = py - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    inside = (x0 >= -1) & (x0 < Ws) & (y0 >= -1) & (y0 < Hs)
    row0 = np.array(starts)[lvl] + np.arange(H)[:, None, None] * ((Hs + 1) * (Ws + 1))
    idx = np.where(inside, row0 + (y0 + 1) * (Ws + 1) + (x0 + 1), 0).reshape(Q, H, L * K)
    a = np.where(inside, weights, 0.0)
    corner_w = np.stack([(1 - wy) * (1 - wx) * a, (1 - wy) * wx * a,
                         wy * (1 - wx) * a, wy * wx * a], axis=-1).reshape(Q, H, 1, L * K * 4)
    samples = table[idx].reshape(Q, H, L * K * 4, hd)
    acc = np.matmul(corner_w, samples)[:, :, 0, :]                      # Q x H x hd
    out_w = params.output_proj.transpose(0, 2, 1).reshape(H * hd, params.d_model)
    return acc.reshape(Q, H * hd) @ out_w
