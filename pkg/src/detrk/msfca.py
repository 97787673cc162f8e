"""Multi-spectral frequency channel attention.

Channels are split into ``n`` consecutive groups; each group is squeezed to a
vector by projecting its spatial map onto one 2D DCT basis image.  The
concatenated squeeze goes through a square fc layer and a sigmoid, and the
result rescales the input channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor_core import DimensionError, linear, sigmoid


@dataclass(frozen=True)
class DctBasis:
    H: int
    W: int
    u: int
    v: int
    values: np.ndarray = field(repr=False, compare=False)


def _cos_table(n: int, k: int) -> np.ndarray:
    return np.cos(math.pi * k * (np.arange(n) + 0.5) / n)


def _check_freq(H: int, W: int, u: int, v: int) -> None:
    if H < 1 or W < 1:
        raise DimensionError(f"grid extents must be positive, got {H}x{W}")
    if not (0 <= u < H and 0 <= v < W):
        raise ValueError(f"frequency ({u}, {v}) out of range for a {H}x{W} grid")


def dct_basis(H: int, W: int, u: int, v: int) -> DctBasis:
    """Unnormalised type-II basis ``cos(pi u (h+.5)/H) * cos(pi v (w+.5)/W)``."""
    _check_freq(H, W, u, v)
    values = np.outer(_cos_table(H, u), _cos_table(W, v))
    return DctBasis(H, W, u, v, values)


def freq_compress(part: np.ndarray, u: int, v: int) -> np.ndarray:
    """Project every channel of a C0 x H x W block onto basis (u, v)."""
    part = np.asarray(part, dtype=np.float64)
    if part.ndim != 3:
        raise DimensionError(f"expected C x H x W, got {part.shape}")
    _, H, W = part.shape
    basis = dct_basis(H, W, u, v).values
    return np.einsum("chw,hw->c", part, basis)


def zigzag_pairs(count: int, H: int | None = None, W: int | None = None) -> list[tuple[int, int]]:
    """Low-frequency-first ordering: (0,0), (0,1), (1,0), (1,1), (0,2), (2,0), ...

    Pairs are ranked by ``max(u, v)``, then ``u + v``, then ``u``.  When the grid
    is given, pairs that do not fit it are skipped.
    """
    side = max(H, W) if H is not None and W is not None else max(count, 1)
    pairs = sorted(_fitting(side, H, W), key=lambda p: (max(p), p[0] + p[1], p[0]))
    if len(pairs) < count:
        raise ValueError(f"a {H}x{W} grid has only {len(pairs)} frequencies, need {count}")
    return pairs[:count]


def _fitting(side: int, H: int | None, W: int | None) -> list[tuple[int, int]]:
    # every pair with max(u, v) < side that fits the grid
    return [(u, v) for u in range(side) for v in range(side)
            if (H is None or u < H) and (W is None or v < W)]


def default_groups(C: int) -> int:
    """16 groups when possible, otherwise the largest divisor of C not above 16."""
    if C < 16:
        return C
    return max(n for n in range(1, 17) if C % n == 0)


@dataclass
class FrequencyAssignment:
    n: int
    pairs: list[tuple[int, int]]

    def __post_init__(self):
        self.pairs = [(int(u), int(v)) for u, v in self.pairs]
        if self.n < 1 or len(self.pairs) != self.n:
            raise ValueError(f"need exactly n={self.n} frequency pairs, got {len(self.pairs)}")

    @classmethod
    def default(cls, C: int, H: int | None = None, W: int | None = None,
                n: int | None = None) -> "FrequencyAssignment":
        n = default_groups(C) if n is None else n
        if H is not None and W is not None and n > H * W:
            # small grids cannot host n distinct frequencies; reuse from the start
            base = zigzag_pairs(H * W, H, W)
            pairs = [base[i % len(base)] for i in range(n)]
        else:
            pairs = zigzag_pairs(n, H, W)
        return cls(n, pairs)

    def to_json(self) -> dict:
        return {"n": self.n, "pairs": [list(p) for p in self.pairs]}

    @classmethod
    def from_json(cls, obj: dict) -> "FrequencyAssignment":
        return cls(int(obj["n"]), [tuple(p) for p in obj["pairs"]])


@dataclass
class MsfcaParams:
    assignment: FrequencyAssignment
    fc_weight: np.ndarray
    fc_bias: np.ndarray

    @classmethod
    def init(cls, C: int, rng: np.random.Generator, assignment: FrequencyAssignment | None = None,
             scale: float | None = None) -> "MsfcaParams":
        scale = 1.0 / math.sqrt(C) if scale is None else scale
        return cls(assignment or FrequencyAssignment.default(C),
                   rng.normal(0.0, scale, (C, C)), np.zeros(C))


def multi_spectral_compress(X: np.ndarray, assignment: FrequencyAssignment) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise DimensionError(f"expected C x H x W, got {X.shape}")
    C = X.shape[0]
    n = assignment.n
    if C % n:
        raise DimensionError(f"{C} channels cannot be split into {n} equal groups")
    size = C // n
    return np.concatenate([freq_compress(X[i * size:(i + 1) * size], u, v)
                           for i, (u, v) in enumerate(assignment.pairs)])


def channel_attention(X: np.ndarray, params: MsfcaParams) -> np.ndarray:
    freq = multi_spectral_compress(X, params.assignment)
    return sigmoid(linear(freq, params.fc_weight, params.fc_bias))


def apply_msfca(X: np.ndarray, params: MsfcaParams) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if params.fc_weight.shape != (X.shape[0], X.shape[0]):
        raise DimensionError(
            f"fc weight {params.fc_weight.shape} does not match {X.shape[0]} channels")
    att = channel_attention(X, params)
    return att[:, None, None] * X


def inverse_from_compressions(freqs: np.ndarray) -> np.ndarray:
    """Rebuild an H x W map from its full H x W table of basis projections.

    ``freqs[u, v]`` must be the projection of the map onto ``dct_basis(H, W, u, v)``.
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    H, W = freqs.shape
    out = np.zeros((H, W))
    for u in range(H):
        for v in range(W):
            b = dct_basis(H, W, u, v).values
            out += freqs[u, v] * b / np.sum(b * b)
    return out


def global_average_pool(X: np.ndarray) -> np.ndarray:
    return np.asarray(X, dtype=np.float64).mean(axis=(1, 2))

