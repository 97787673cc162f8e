"""Pipeline configuration with strict JSON (de)serialisation."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

SEED_ENV = "DETRK_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class MsdaConfig:
    heads: int = 8
    levels: int = 4
    points: int = 4


@dataclass
class PosEncSettings:
    temperature: float = 20.0
    temperature_mode: str = "scaled"


@dataclass
class LossWeightSettings:
    focal: float = 2.0
    l1: float = 5.0
    giou: float = 2.0
    gamma: float = 2.0


@dataclass
class DnNoise:
    box_noise_scale: float = 0.4
    label_flip_prob: float = 0.2


@dataclass
class MsfcaSettings:
    groups: int | None = None                     # None: 16 or the largest divisor below
    pairs: list[list[int]] | None = None          # None: low-frequency zigzag


@dataclass
class SceneSettings:
    image_size: int = 64
    source_size: int = 256         # acquisition resolution that pixel_area is measured in
    min_nodules: int = 1
    max_nodules: int = 3


@dataclass
class PipelineConfig:
    encoder_layers: int = 6
    decoder_layers: int = 6
    d_model: int = 64
    msda: MsdaConfig = field(default_factory=MsdaConfig)
    posenc: PosEncSettings = field(default_factory=PosEncSettings)
    loss_weights: LossWeightSettings = field(default_factory=LossWeightSettings)
    dn_noise: DnNoise = field(default_factory=DnNoise)
    msfca: MsfcaSettings = field(default_factory=MsfcaSettings)
    scene: SceneSettings = field(default_factory=SceneSettings)
    backbone_channels: list[int] = field(default_factory=lambda: [16, 32, 64, 64])
    group_norm_groups: int = 32
    num_queries: int = 100
    num_classes: int = 2
    score_floor: float = 0.05
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        if not 0 <= self.encoder_layers <= 6:
            raise ConfigError(f"encoder_layers must be in 0..6, got {self.encoder_layers}")
        if not 1 <= self.decoder_layers <= 6:
            raise ConfigError(f"decoder_layers must be in 1..6, got {self.decoder_layers}")
        if self.d_model < 4 or self.d_model % self.msda.heads:
            raise ConfigError(f"d_model={self.d_model} must be divisible by msda.heads={self.msda.heads}")
        if (self.d_model // 2) % 2:
            raise ConfigError("d_model/2 must be even for 2D positional encoding")
        if self.msda.levels != len(self.backbone_channels):
            raise ConfigError(f"msda.levels={self.msda.levels} but the backbone has "
                              f"{len(self.backbone_channels)} stages")
        if min(self.msda.heads, self.msda.points) < 1:
            raise ConfigError("msda heads and points must be positive")
        if self.posenc.temperature <= 0:
            raise ConfigError("posenc.temperature must be positive")
        if self.posenc.temperature_mode not in ("scaled", "base"):
            raise ConfigError(f"unknown posenc.temperature_mode {self.posenc.temperature_mode!r}")
        if self.scene.image_size < 32 or self.scene.image_size % 2 ** len(self.backbone_channels):
            raise ConfigError(f"scene.image_size must be >= 32 and divisible by "
                              f"{2 ** len(self.backbone_channels)}")
        if self.scene.source_size < self.scene.image_size:
            raise ConfigError("scene.source_size must be at least scene.image_size")
        if not 0 <= self.scene.min_nodules <= self.scene.max_nodules:
            raise ConfigError("need 0 <= scene.min_nodules <= scene.max_nodules")
        if self.num_queries < 1 or self.num_classes < 1:
            raise ConfigError("num_queries and num_classes must be positive")
        if not 0.0 <= self.score_floor <= 1.0:
            raise ConfigError("score_floor must lie in [0, 1]")
        for name in ("box_noise_scale", "label_flip_prob"):
            if not 0.0 <= getattr(self.dn_noise, name) <= 1.0:
                raise ConfigError(f"dn_noise.{name} must lie in [0, 1]")
        return self

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        return _build(cls, obj, "").validate()

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _build(tp, obj, path: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    known = {f.name: f for f in dataclasses.fields(tp)}
    unknown = sorted(set(obj) - set(known))
    if unknown:
        raise ConfigError(f"{path or '<root>'}: unknown keys {unknown}")
    hints = {f.name: f.default_factory for f in dataclasses.fields(tp)
             if f.default_factory is not dataclasses.MISSING}
    kwargs = {}
    for key, value in obj.items():
        factory = hints.get(key)
        default = factory() if factory is not None else None
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, f"{path}{key}.")
        else:
            kwargs[key] = value
    try:
        return tp(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from exc


def load_config(path: str | os.PathLike | None = None, seed: int | None = None) -> PipelineConfig:
    """Read a config file (or defaults); ``DETRK_SEED`` overrides the file, ``seed`` overrides both."""
    if path is None:
        cfg = PipelineConfig()
    else:
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        try:
            cfg = PipelineConfig.from_json(obj)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            cfg.seed = int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from exc
    if seed is not None:
        cfg.seed = int(seed)
    return cfg.validate()
