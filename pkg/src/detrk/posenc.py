"""Sinusoidal positional encoding with a temperature knob.

Two frequency schedules are available:

``"scaled"`` (default)
    ``out[2i]   = sin(pos / (T * 10000 ** (2i / d)))``
    ``out[2i+1] = cos(pos / (T * 10000 ** ((2i+1) / d)))``
    T divides every frequency; sin and cos slots use their own exponents.

``"base"``
    The DETR convention, where T replaces 10000 as the base and each sin/cos
    pair shares the exponent ``2i / d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TEMPERATURE_MODES = ("scaled", "base")


@dataclass(frozen=True)
class PosEncConfig:
    d_model: int = 64
    temperature: float = 20.0
    temperature_mode: str = "scaled"

    def __post_init__(self):
        if self.d_model < 2 or self.d_model % 2:
            raise ValueError(f"d_model must be a positive even number, got {self.d_model}")
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError(f"temperature must be finite and positive, got {self.temperature}")
        if self.temperature_mode not in TEMPERATURE_MODES:
            raise ValueError(f"temperature_mode must be one of {TEMPERATURE_MODES}")


def _periods(cfg: PosEncConfig) -> np.ndarray:
    d = cfg.d_model
    j = np.arange(d, dtype=np.float64)
    if cfg.temperature_mode == "scaled":
        return cfg.temperature * 10000.0 ** (j / d)
    return cfg.temperature ** (2.0 * (j // 2) / d)


def positional_encoding(pos: float, cfg: PosEncConfig = PosEncConfig()) -> np.ndarray:
    angles = float(pos) / _periods(cfg)
    out = np.empty(cfg.d_model)
    out[0::2] = np.sin(angles[0::2])
    out[1::2] = np.cos(angles[1::2])
    return out


def encode_positions(positions: np.ndarray, cfg: PosEncConfig = PosEncConfig()) -> np.ndarray:
    """Row ``i`` equals ``positional_encoding(positions[i], cfg)``."""
    angles = np.asarray(positions, dtype=np.float64)[:, None] / _periods(cfg)[None, :]
    out = np.empty_like(angles)
    out[:, 0::2] = np.sin(angles[:, 0::2])
    out[:, 1::2] = np.cos(angles[:, 1::2])
    return out


def encode_2d_grid(H: int, W: int, cfg: PosEncConfig = PosEncConfig()) -> np.ndarray:
    """d_model x H x W map: first half encodes the row index, second half the column."""
    if H < 1 or W < 1:
        raise ValueError(f"grid extents must be positive, got {H}x{W}")
    half = cfg.d_model // 2
    if half % 2:
        raise ValueError(f"d_model/2 = {half} must be even for the 2D split")
    sub = PosEncConfig(half, cfg.temperature, cfg.temperature_mode)
    ey = encode_positions(np.arange(H), sub)      # H x half
    ex = encode_positions(np.arange(W), sub)      # W x half
    out = np.empty((cfg.d_model, H, W))
    out[:half] = np.broadcast_to(ey.T[:, :, None], (half, H, W))
    out[half:] = np.broadcast_to(ex.T[:, None, :], (half, H, W))
    return out
