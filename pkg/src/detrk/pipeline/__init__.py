"""Configuration, synthetic data, JSON I/O and the toy end-to-end forward pass."""

from .config import ConfigError, PipelineConfig, load_config
from .io import DataError
from .model import ForwardOutput, ModelParams, forward_raw, init_params, toy_forward
from .scenes import SyntheticScene, gen_scenes, gen_synthetic_scene

__all__ = [
    "ConfigError", "DataError", "ForwardOutput", "ModelParams", "PipelineConfig", "SyntheticScene",
    "forward_raw", "gen_scenes", "gen_synthetic_scene", "init_params", "load_config", "toy_forward",
]
