"""Model configuration, the published variants, and the full backbone."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .blocks import Downsample, ImageBlock, PatchEmbed, VideoBlock
from .morphfc import DivisibilityError, derive_group_width
from .nn import LayerNorm, Linear, Module
from .tensor import Tensor

DEFAULT_MLP_RATIO = 4.0
CHUNK_LENS = (14, 28, 28, 49)


@dataclass(frozen=True)
class StageConfig:
    depth: int
    channels: int
    chunk_len: int
    downsample_after: bool = True


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "custom"
    stages: tuple[StageConfig, ...] = ()
    stoch_depth_max: float = 0.0
    num_classes: int = 1000
    input_kind: str = "image"  # "image" | "video"
    height: int = 224
    width: int = 224
    frames: int = 1
    mlp_ratio: float = DEFAULT_MLP_RATIO
    gate_enabled: bool = True
    pathways: str = "hvc"
    group_rule: str = "C/L"
    temporal_group_rule: str = "C/L"
    video_order: str = "T+S"
    video_residual: str = "skip"
    temporal_enabled: bool = True
    dtype: str = "float32"

    @property
    def effective_frames(self) -> int:
        return -(-self.frames // 2)

    def group_widths(self) -> list[int]:
        return [derive_group_width(s.channels, s.chunk_len, self.group_rule) for s in self.stages]


PUBLISHED_TARGETS = {
    # variant: (params in millions, GFLOPs at 224x224)
    "T": (23.0, 3.9),
    "S": (38.0, 7.0),
    "B": (58.0, 10.2),
    "L": (76.0, 12.5),
}

_VARIANTS = {
    "T": ((3, 4, 7, 3), (84, 168, 336, 588), 0.1),
    "S": ((3, 4, 9, 3), (112, 224, 392, 784), 0.1),
    "B": ((4, 6, 15, 4), (112, 224, 392, 784), 0.3),
    "L": ((4, 8, 18, 6), (112, 224, 392, 784), 0.4),
}


def variant_config(name: str, **overrides) -> ModelConfig:
    """One of the four published settings (Tiny/Small/Base/Large)."""
    key = name.upper()[:1]
    if key not in _VARIANTS:
        raise ValueError(f"unknown variant {name!r}; expected one of T, S, B, L")
    depths, channels, sdp = _VARIANTS[key]
    stages = tuple(
        StageConfig(d, c, l, downsample_after=i < 3)
        for i, (d, c, l) in enumerate(zip(depths, channels, CHUNK_LENS))
    )
    cfg = ModelConfig(variant=key, stages=stages, stoch_depth_max=sdp)
    return replace(cfg, **overrides)


def validate_config(cfg: ModelConfig) -> None:
    if cfg.variant in _VARIANTS and len(cfg.stages) != 4:
        raise ValueError(f"variant {cfg.variant} must have exactly 4 stages")
    if not 1 <= len(cfg.stages) <= 4:
        raise ValueError(f"1 to 4 stages are supported, got {len(cfg.stages)}")
    if cfg.input_kind not in ("image", "video"):
        raise ValueError(f"input kind must be image or video, got {cfg.input_kind!r}")
    if not 0.0 <= cfg.stoch_depth_max < 1.0:
        raise ValueError("stochastic depth rate must be in [0, 1)")
    for i, s in enumerate(cfg.stages):
        d = derive_group_width(s.channels, s.chunk_len, cfg.group_rule)
        if s.channels % d:
            raise DivisibilityError(f"stage {i + 1}: D={d} does not divide C={s.channels}")
        if cfg.input_kind == "video":
            dt = derive_group_width(s.channels, cfg.effective_frames, cfg.temporal_group_rule)
            if s.channels % dt:
                raise DivisibilityError(f"stage {i + 1}: D_t={dt} does not divide C={s.channels}")


def drop_path_schedule(total_depth: int, max_rate: float) -> list[float]:
    """Linear ramp from 0 to ``max_rate`` over all blocks."""
    if total_depth <= 0:
        return []
    if total_depth == 1:
        return [max_rate]
    return [max_rate * i / (total_depth - 1) for i in range(total_depth)]


class MorphMLP(Module):
    """Patch embed -> stages of blocks with 2x downsampling -> LN -> mean pool -> linear."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        validate_config(cfg)
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype).type
        rng = np.random.default_rng(seed)
        video = cfg.input_kind == "video"
        c1 = cfg.stages[0].channels
        self.patch_embed = PatchEmbed(c1, tubelet=2 if video else None, rng=rng, dtype=dtype)

        rates = drop_path_schedule(sum(s.depth for s in cfg.stages), cfg.stoch_depth_max)
        self.stages: list[list[Module]] = []
        self.downsamples: list[Optional[Downsample]] = []
        k = 0
        for i, s in enumerate(cfg.stages):
            d = derive_group_width(s.channels, s.chunk_len, cfg.group_rule)
            blocks = []
            for _ in range(s.depth):
                if video:
                    dt = derive_group_width(s.channels, cfg.effective_frames, cfg.temporal_group_rule)
                    blk = VideoBlock(s.channels, s.chunk_len, cfg.effective_frames, d, dt,
                                     mlp_ratio=cfg.mlp_ratio, drop_path=rates[k],
                                     gate=cfg.gate_enabled, pathways=cfg.pathways,
                                     order=cfg.video_order, residual=cfg.video_residual,
                                     temporal=cfg.temporal_enabled, rng=rng, dtype=dtype)
                else:
                    blk = ImageBlock(s.channels, s.chunk_len, d, mlp_ratio=cfg.mlp_ratio,
                                     drop_path=rates[k], gate=cfg.gate_enabled,
                                     pathways=cfg.pathways, rng=rng, dtype=dtype)
                blocks.append(blk)
                k += 1
            self.stages.append(blocks)
            last = i == len(cfg.stages) - 1
            if s.downsample_after and not last:
                self.downsamples.append(
                    Downsample(s.channels, cfg.stages[i + 1].channels, rng=rng, dtype=dtype)
                )
            else:
                if not last and s.channels != cfg.stages[i + 1].channels:
                    raise ValueError(
                        f"stage {i + 1} keeps resolution but changes channels "
                        f"{s.channels} -> {cfg.stages[i + 1].channels}"
                    )
                self.downsamples.append(None)
        c_last = cfg.stages[-1].channels
        self.norm = LayerNorm(c_last, dtype=dtype)
        self.head = Linear(c_last, cfg.num_classes, rng=rng, dtype=dtype)

    def named_parameters(self, prefix: str = ""):
        yield from self.patch_embed.named_parameters(prefix + "patch_embed.")
        for i, blocks in enumerate(self.stages):
            for j, blk in enumerate(blocks):
                yield from blk.named_parameters(f"{prefix}stages.{i}.{j}.")
            if self.downsamples[i] is not None:
                yield from self.downsamples[i].named_parameters(f"{prefix}downsamples.{i}.")
        yield from self.norm.named_parameters(prefix + "norm.")
        yield from self.head.named_parameters(prefix + "head.")

    def modules(self):
        yield self
        yield from self.patch_embed.modules()
        for blocks, ds in zip(self.stages, self.downsamples):
            for blk in blocks:
                yield from blk.modules()
            if ds is not None:
                yield from ds.modules()
        yield from self.norm.modules()
        yield from self.head.modules()

    def blocks(self) -> list[Module]:
        return [b for stage in self.stages for b in stage]

    def features(self, x: Tensor) -> Tensor:
        x = self.patch_embed(x)
        for blocks, ds in zip(self.stages, self.downsamples):
            for blk in blocks:
                x = blk(x)
            if ds is not None:
                x = ds(x)
        return self.norm(x)

    def forward(self, x) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.head.weight.dtype))
        f = self.features(x)
        pooled = T.mean(f, axis=tuple(range(1, f.ndim - 1)))
        return self.head(pooled)


def build_model(cfg: ModelConfig, seed: int = 0) -> MorphMLP:
    return MorphMLP(cfg, seed=seed)


def custom_config(depths: Sequence[int], channels: Sequence[int], chunk_lens: Sequence[int],
                  **kw) -> ModelConfig:
    stages = tuple(
        StageConfig(d, c, l, downsample_after=i < len(depths) - 1)
        for i, (d, c, l) in enumerate(zip(depths, channels, chunk_lens))
    )
    return ModelConfig(variant="custom", stages=stages, **kw)


IMAGE_TO_VIDEO_NAMES = {"norm1": "norm_s", "morphfc": "spatial", "norm2": "norm_m"}


def inflate_image_state(state: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Rename image-block parameters to their video-block counterparts.

    The patch projection is inflated over the two-frame tubelet by splitting
    the image weights evenly between the frames. The temporal layers have no
    image counterpart and are left at their random initialization.
    """
    out = {}
    for name, arr in state.items():
        parts = name.split(".")
        if parts[0] == "stages" and len(parts) > 3 and parts[3] in IMAGE_TO_VIDEO_NAMES:
            parts[3] = IMAGE_TO_VIDEO_NAMES[parts[3]]
        if name == "patch_embed.proj.weight":
            # rows ordered (dy, dx, c) -> (dy, dx, frame, c)
            k, cout = arr.shape
            w = arr.reshape(16, 3, cout)
            arr = np.stack([w / 2.0, w / 2.0], axis=1).reshape(16 * 2 * 3, cout)
        out[".".join(parts)] = arr
    return out


def load_image_weights(video_model: MorphMLP, image_state: dict[str, np.ndarray]) -> list[str]:
    """Initialize a video model from an image checkpoint; returns untouched parameter names."""
    return video_model.load_state_dict(inflate_image_state(image_state), strict=False)
