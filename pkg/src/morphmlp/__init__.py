"""MorphMLP: chunked fully-connected token mixing for image and video backbones."""

from .model import ModelConfig, MorphMLP, StageConfig, build_model, custom_config, variant_config
from .morphfc import MorphFC, TemporalFC, chunk_merge, chunk_split, derive_group_width
from .tensor import Tensor, backward, no_grad

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "MorphFC",
    "MorphMLP",
    "StageConfig",
    "TemporalFC",
    "Tensor",
    "backward",
    "build_model",
    "chunk_merge",
    "chunk_split",
    "custom_config",
    "derive_group_width",
    "no_grad",
    "variant_config",
]
