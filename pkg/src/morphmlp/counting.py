"""Parameter and multiply-accumulate accounting.

MACs are counted symbolically for every matrix product the forward pass
performs (patch projection, MorphFC pathways, temporal FC, MLP, downsample,
head). Elementwise work (norms, GELU, residual adds, gating) is not counted.
One MAC is reported as one FLOP.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .blocks import ImageBlock, VideoBlock
from .model import MorphMLP
from .morphfc import MorphFC, TemporalFC
from .nn import Module


def count_params(model: Module) -> int:
    return int(sum(p.size for p in model.parameters()))


def matmul_macs(m: int, k: int, n: int) -> int:
    return m * k * n


def morphfc_macs(layer: MorphFC, height: int, width: int, frames: int = 1) -> int:
    tokens = height * width
    c, l, d = layer.channels, layer.length, layer.group
    ld = l * d
    chunks = -(-tokens // l)
    per_path = matmul_macs(chunks * (c // d), ld, ld)
    total = 0
    total += per_path * ("h" in layer.pathways)
    total += per_path * ("v" in layer.pathways)
    if "c" in layer.pathways:
        total += matmul_macs(tokens, c, c)
    return total * frames


def temporal_macs(layer: TemporalFC, height: int, width: int) -> int:
    n = layer.frames * layer.group
    return matmul_macs(height * width * (layer.channels // layer.group), n, n)


def _mlp_macs(block, tokens: int) -> int:
    fc1, fc2 = block.mlp.fc1, block.mlp.fc2
    return matmul_macs(tokens, fc1.in_features, fc1.out_features) + matmul_macs(
        tokens, fc2.in_features, fc2.out_features
    )


def count_flops(model: MorphMLP, input_shape: Optional[Sequence[int]] = None) -> int:
    """MACs of one forward pass on a single sample of ``input_shape`` (H, W[, T])."""
    cfg = model.cfg
    if input_shape is None:
        input_shape = (cfg.height, cfg.width) + ((cfg.frames,) if cfg.input_kind == "video" else ())
    h, w = input_shape[0], input_shape[1]
    video = cfg.input_kind == "video"
    frames = input_shape[2] if video and len(input_shape) > 2 else cfg.frames
    t = -(-frames // 2) if video else 1

    pe = model.patch_embed
    h, w = -(-h // pe.patch), -(-w // pe.patch)
    total = matmul_macs(h * w * t, pe.proj.in_features, pe.proj.out_features)
    for blocks, ds in zip(model.stages, model.downsamples):
        for blk in blocks:
            if isinstance(blk, ImageBlock):
                total += morphfc_macs(blk.morphfc, h, w)
            elif isinstance(blk, VideoBlock):
                if blk.use_temporal:
                    total += temporal_macs(blk.temporal, h, w)
                total += morphfc_macs(blk.spatial, h, w, frames=t)
            total += _mlp_macs(blk, h * w * t)
        if ds is not None:
            h, w = -(-h // 2), -(-w // 2)
            total += matmul_macs(h * w * t, ds.proj.in_features, ds.proj.out_features)
    total += matmul_macs(1, model.head.in_features, model.head.out_features)
    return int(total)


@dataclass(frozen=True)
class SweepRow:
    ratio: float
    variant: str
    params: int
    macs: int
    param_dev: float
    flop_dev: float


def mlp_ratio_sweep(ratios: Sequence[float] = (2.0, 3.0, 4.0), size: int = 224,
                    **overrides) -> list[SweepRow]:
    """Counts of the published variants for each MLP ratio, with relative deviations."""
    from .model import PUBLISHED_TARGETS, build_model, variant_config
    from .nn import skip_init

    rows = []
    for r in ratios:
        for v, (tp, tf) in PUBLISHED_TARGETS.items():
            with skip_init():
                model = build_model(variant_config(v, mlp_ratio=r, height=size, width=size,
                                                   **overrides))
            p, f = count_params(model), count_flops(model)
            rows.append(SweepRow(r, v, p, f, (p / 1e6 - tp) / tp, (f / 1e9 - tf) / tf))
    return rows


def best_ratio(rows: Sequence[SweepRow]) -> float:
    """Ratio minimizing the worst relative deviation (params or MACs) over all variants."""
    worst: dict[float, float] = {}
    for row in rows:
        worst[row.ratio] = max(worst.get(row.ratio, 0.0), abs(row.param_dev), abs(row.flop_dev))
    return min(worst, key=worst.get)
