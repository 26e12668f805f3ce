"""Image/video MorphMLP blocks, patch embedding and downsampling."""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import tensor as T
from .morphfc import MorphFC, TemporalFC
from .nn import DropPath, LayerNorm, Linear, Mlp, Module
from .tensor import Tensor

VIDEO_ORDERS = ("T+S", "S+T", "parallel")
VIDEO_RESIDUALS = ("standard", "skip")


class ImageBlock(Module):
    """``u = x + DropPath(GELU(MorphFC(LN(x))))``; ``y = u + DropPath(MLP(LN(u)))``."""

    def __init__(self, channels: int, length: int, group: Optional[int] = None,
                 mlp_ratio: float = 4.0, drop_path: float = 0.0, gate: bool = False,
                 pathways: str = "hvc", rng: Optional[np.random.Generator] = None,
                 dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.norm1 = LayerNorm(channels, dtype=dtype)
        self.morphfc = MorphFC(channels, length, group, gate=gate, pathways=pathways, rng=rng,
                               dtype=dtype)
        self.norm2 = LayerNorm(channels, dtype=dtype)
        self.mlp = Mlp(channels, mlp_ratio, rng=rng, dtype=dtype)
        self.drop_path = DropPath(drop_path, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        u = T.add(x, self.drop_path(T.gelu(self.morphfc(self.norm1(x)))))
        return T.add(u, self.drop_path(self.mlp(self.norm2(u))))


def _per_frame(fn, x: Tensor) -> Tensor:
    """Apply a ``[..., H, W, C]`` op independently to each frame of ``[B, H, W, T, C]``."""
    b, h, w, t, c = x.shape
    y = T.reshape(T.permute(x, (0, 3, 1, 2, 4)), (b * t, h, w, c))
    y = fn(y)
    c2 = y.shape[-1]
    h2, w2 = y.shape[1], y.shape[2]
    return T.permute(T.reshape(y, (b, t, h2, w2, c2)), (0, 2, 3, 1, 4))


class VideoBlock(Module):
    """Factorized temporal / spatial / MLP block on ``[B, H, W, T, C]``.

    ``order`` is ``"T+S"``, ``"S+T"`` or ``"parallel"``; ``residual`` is
    ``"standard"`` (a residual after every sub-layer) or ``"skip"``, where the
    second mixing sub-layer's residual is rooted at the block input instead of
    at the first sub-layer's output. The default ``T+S`` / ``skip`` is::

        u = x + T(LN(x)); v = x + S(LN(u)); y = v + MLP(LN(v))
    """

    def __init__(self, channels: int, length: int, frames: int, group: Optional[int] = None,
                 temporal_group: Optional[int] = None, mlp_ratio: float = 4.0,
                 drop_path: float = 0.0, gate: bool = False, pathways: str = "hvc",
                 order: str = "T+S", residual: str = "skip", temporal: bool = True,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        if order not in VIDEO_ORDERS:
            raise ValueError(f"order must be one of {VIDEO_ORDERS}, got {order!r}")
        if residual not in VIDEO_RESIDUALS:
            raise ValueError(f"residual must be one of {VIDEO_RESIDUALS}, got {residual!r}")
        if order == "parallel" and residual == "skip":
            raise ValueError("the parallel wiring only has a standard residual")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.order = order
        self.residual = residual
        self.use_temporal = temporal
        self.norm_t = LayerNorm(channels, dtype=dtype)
        self.temporal = TemporalFC(channels, frames, temporal_group, rng=rng, dtype=dtype)
        self.norm_s = LayerNorm(channels, dtype=dtype)
        self.spatial = MorphFC(channels, length, group, gate=gate, pathways=pathways, rng=rng,
                               dtype=dtype)
        self.norm_m = LayerNorm(channels, dtype=dtype)
        self.mlp = Mlp(channels, mlp_ratio, rng=rng, dtype=dtype)
        self.drop_path = DropPath(drop_path, rng=rng)

    def temporal_branch(self, x: Tensor) -> Tensor:
        if not self.use_temporal:
            # ablated control: the temporal sub-layer contributes nothing
            return T.scale(x, 0.0)
        return self.drop_path(self.temporal(self.norm_t(x)))

    def spatial_branch(self, x: Tensor) -> Tensor:
        return self.drop_path(_per_frame(self.spatial, self.norm_s(x)))

    def forward(self, x: Tensor) -> Tensor:
        if self.order == "parallel":
            v = T.add(T.add(x, self.temporal_branch(x)), self.spatial_branch(x))
        else:
            first, second = (
                (self.temporal_branch, self.spatial_branch)
                if self.order == "T+S"
                else (self.spatial_branch, self.temporal_branch)
            )
            u = T.add(x, first(x))
            base = x if self.residual == "skip" else u
            v = T.add(base, second(u))
        return T.add(v, self.drop_path(self.mlp(self.norm_m(v))))


def _pad_to_multiple(x: Tensor, axes: dict[int, int]) -> Tensor:
    widths = [(0, 0)] * x.ndim
    for axis, mult in axes.items():
        extra = (-x.shape[axis]) % mult
        widths[axis] = (0, extra)
    return T.pad_zeros(x, widths)


class PatchEmbed(Module):
    """Non-overlapping 4x4 patches (4x4x2 tubelets for video) projected linearly.

    Image input ``[B, H, W, 3]`` -> ``[B, H/4, W/4, C]``; spatial extents are
    zero-padded up to a multiple of 4. Video input ``[B, H, W, T, 3]`` ->
    ``[B, H/4, W/4, T/2, C]``; an odd frame count is padded by repeating the
    last frame.
    """

    def __init__(self, out_channels: int, in_channels: int = 3, patch: int = 4,
                 tubelet: Optional[int] = None, rng=None, dtype=np.float32):
        self.patch = patch
        self.tubelet = tubelet
        self.in_channels = in_channels
        k = patch * patch * in_channels * (tubelet or 1)
        self.proj = Linear(k, out_channels, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        p = self.patch
        if self.tubelet is None:
            x = _pad_to_multiple(x, {1: p, 2: p})
            b, h, w, c = x.shape
            y = T.reshape(x, (b, h // p, p, w // p, p, c))
            y = T.permute(y, (0, 1, 3, 2, 4, 5))
            y = T.reshape(y, (b, h // p, w // p, p * p * c))
            return self.proj(y)
        tt = self.tubelet
        x = _pad_to_multiple(x, {1: p, 2: p})
        if x.shape[3] % tt:
            reps = [T.getitem(x, (slice(None),) * 3 + (slice(-1, None),))] * (tt - x.shape[3] % tt)
            x = T.concat([x, *reps], axis=3)
        b, h, w, t, c = x.shape
        y = T.reshape(x, (b, h // p, p, w // p, p, t // tt, tt, c))
        y = T.permute(y, (0, 1, 3, 5, 2, 4, 6, 7))
        y = T.reshape(y, (b, h // p, w // p, t // tt, p * p * tt * c))
        return self.proj(y)


class Downsample(Module):
    """2x2 patch merge: concatenated ``4*C_in`` vector -> ``C_out`` (odd extents zero-padded).

    The concatenation order is ``(dy, dx, channel)``.
    """

    def __init__(self, in_channels: int, out_channels: int, rng=None, dtype=np.float32):
        self.proj = Linear(4 * in_channels, out_channels, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim == 5:
            return _per_frame(self.forward, x)
        x = _pad_to_multiple(x, {1: 2, 2: 2})
        b, h, w, c = x.shape
        y = T.reshape(x, (b, h // 2, 2, w // 2, 2, c))
        y = T.permute(y, (0, 1, 3, 2, 4, 5))
        y = T.reshape(y, (b, h // 2, w // 2, 4 * c))
        return self.proj(y)
