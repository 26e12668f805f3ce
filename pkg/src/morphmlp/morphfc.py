"""MorphFC: chunked fully-connected token mixing.

A feature map ``[H, W, C]`` is read as a token sequence (row-major for the
horizontal pathway, column-major for the vertical one), cut into chunks of
``L`` consecutive tokens, and the channels are cut into groups of ``D``. Each
``(chunk, group)`` cell is flattened token-major into a vector of length
``L * D`` and multiplied by one shared square matrix. When ``L`` does not
divide ``H * W`` the sequence is zero-padded to the next multiple and the pad
is cropped again after the transform.

The temporal variant does the same per spatial position, with the frames of
that position forming the chunk.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .nn import Linear, Module, Parameter, trunc_normal
from .tensor import Tensor

PATHWAYS = ("h", "v", "c")
DEFAULT_MAX_LD = 4096


class DivisibilityError(ValueError):
    """A group width does not divide the channel count."""


@dataclass(frozen=True)
class ChunkPlan:
    """How a feature map was cut into chunks; enough to undo the cut."""

    direction: str  # "horizontal" | "vertical" | "temporal"
    height: int
    width: int
    channels: int
    length: int  # tokens per chunk (frames for temporal)
    group: int  # channels per group
    num_chunks: int
    pad_len: int = 0

    @property
    def groups(self) -> int:
        return self.channels // self.group


def plan_chunks(direction: str, height: int, width: int, channels: int, length: int,
                group: int) -> ChunkPlan:
    if length <= 0 or group <= 0:
        raise ValueError(f"chunk length and group width must be positive, got L={length}, D={group}")
    if channels % group:
        raise DivisibilityError(f"group width D={group} does not divide C={channels}")
    if direction == "temporal":
        return ChunkPlan(direction, height, width, channels, length, group, height * width)
    if direction not in ("horizontal", "vertical"):
        raise ValueError(f"unknown direction {direction!r}")
    tokens = height * width
    num = -(-tokens // length)
    return ChunkPlan(direction, height, width, channels, length, group, num, num * length - tokens)


def chunk_split(x: Tensor, direction: str, length: int, group: int) -> tuple[Tensor, ChunkPlan]:
    """Cut ``x[..., H, W, C]`` into ``[..., num_chunks, C/D, L*D]``.

    For ``direction="temporal"`` the input is ``x[..., H, W, T, C]``, ``length``
    must equal ``T`` and the result is ``[..., H*W, C/D, T*D]`` (frame-major).
    """
    if direction == "temporal":
        *lead, h, w, t, c = x.shape
        if length != t:
            raise ValueError(f"temporal chunk length {length} must equal frame count {t}")
        plan = plan_chunks(direction, h, w, c, t, group)
        g = c // group
        y = T.reshape(x, (-1, h * w, t, g, group))
        y = T.permute(y, (0, 1, 3, 2, 4))
        return T.reshape(y, (*lead, h * w, g, t * group)), plan

    *lead, h, w, c = x.shape
    plan = plan_chunks(direction, h, w, c, length, group)
    g = c // group
    y = T.reshape(x, (-1, h, w, c))
    if direction == "vertical":
        y = T.permute(y, (0, 2, 1, 3))
    y = T.reshape(y, (y.shape[0], h * w, c))
    if plan.pad_len:
        y = T.pad_zeros(y, [(0, 0), (0, plan.pad_len), (0, 0)])
    y = T.reshape(y, (-1, plan.num_chunks, length, g, group))
    y = T.permute(y, (0, 1, 3, 2, 4))
    return T.reshape(y, (*lead, plan.num_chunks, g, length * group)), plan


def chunk_merge(y: Tensor, plan: ChunkPlan) -> Tensor:
    """Exact inverse of :func:`chunk_split`, including removal of padding."""
    g, d, n = plan.groups, plan.group, plan.length
    if y.shape[-3:] != (plan.num_chunks, g, n * d):
        raise ValueError(
            f"chunked tensor {y.shape} does not match plan "
            f"({plan.num_chunks}, {g}, {n * d})"
        )
    lead = y.shape[:-3]
    h, w, c = plan.height, plan.width, plan.channels
    if plan.direction == "temporal":
        z = T.reshape(y, (-1, h * w, g, n, d))
        z = T.permute(z, (0, 1, 3, 2, 4))
        return T.reshape(z, (*lead, h, w, n, c))

    z = T.reshape(y, (-1, plan.num_chunks, g, n, d))
    z = T.permute(z, (0, 1, 3, 2, 4))
    z = T.reshape(z, (z.shape[0], plan.num_chunks * n, c))
    if plan.pad_len:
        z = T.getitem(z, (slice(None), slice(0, h * w), slice(None)))
    if plan.direction == "vertical":
        z = T.reshape(z, (-1, w, h, c))
        z = T.permute(z, (0, 2, 1, 3))
    return T.reshape(z, (*lead, h, w, c))


def chunk_fc(x: Tensor, weight: Tensor, direction: str, length: int, group: int) -> Tensor:
    """One MorphFC pathway: split, multiply every chunk vector by ``weight``, merge."""
    chunks, plan = chunk_split(x, direction, length, group)
    ld = chunks.shape[-1]
    if weight.shape != (ld, ld):
        raise ValueError(f"{direction} weight {weight.shape} does not match chunk extent {ld}")
    flat = T.reshape(chunks, (-1, ld))
    out = T.reshape(T.matmul(flat, weight), chunks.shape)
    return chunk_merge(out, plan)


def derive_group_width(channels: int, length: int, rule: str = "C/L") -> int:
    """Channels per group for a chunk length.

    ``rule`` is one of ``"C/L"`` (default), ``"C/2L"``, ``"2C/L"`` or an integer
    string fixing ``D`` directly. When the target is not a divisor of ``C`` the
    largest divisor of ``C`` not exceeding it is returned (1 at minimum).
    """
    if channels <= 0 or length <= 0:
        raise ValueError("channels and length must be positive")
    rule = rule.replace(" ", "").upper()
    if rule == "C/L":
        target = channels / length
    elif rule == "C/2L":
        target = channels / (2 * length)
    elif rule == "2C/L":
        target = 2 * channels / length
    elif rule.isdigit():
        target = int(rule)
    else:
        raise ValueError(f"unknown group-width rule {rule!r}")
    best = 1
    for d in range(1, channels + 1):
        if d > target:
            break
        if channels % d == 0:
            best = d
    return best


class MorphFC(Module):
    """Horizontal, vertical and channel pathways combined by (gated) sum.

    ``pathways`` selects a subset of ``"hvc"`` for ablations. With ``gate=True``
    each channel owns one logit per pathway, softmax-normalized into convex
    weights (logits start at 0, i.e. a uniform average).
    """

    def __init__(self, channels: int, length: int, group: Optional[int] = None,
                 gate: bool = False, pathways: str = "hvc", max_ld: int = DEFAULT_MAX_LD,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        group = derive_group_width(channels, length) if group is None else group
        if channels % group:
            raise DivisibilityError(f"group width D={group} does not divide C={channels}")
        ld = length * group
        if ld > max_ld:
            raise ValueError(f"chunk extent L*D={ld} exceeds the configured maximum {max_ld}")
        pathways = "".join(p for p in PATHWAYS if p in pathways)
        if not pathways:
            raise ValueError("at least one pathway is required")
        self.channels = channels
        self.length = length
        self.group = group
        self.pathways = pathways
        if "h" in pathways:
            self.weight_h = Parameter(trunc_normal(rng, (ld, ld)), dtype=dtype)
        if "v" in pathways:
            self.weight_v = Parameter(trunc_normal(rng, (ld, ld)), dtype=dtype)
        if "c" in pathways:
            self.channel = Linear(channels, channels, rng=rng, dtype=dtype)
        self.gate = (
            Parameter(np.zeros((channels, len(pathways))), decay=False, dtype=dtype) if gate else None
        )

    def branches(self, x: Tensor) -> list[Tensor]:
        out = []
        if "h" in self.pathways:
            out.append(chunk_fc(x, self.weight_h, "horizontal", self.length, self.group))
        if "v" in self.pathways:
            out.append(chunk_fc(x, self.weight_v, "vertical", self.length, self.group))
        if "c" in self.pathways:
            out.append(self.channel(x))
        return out

    def gate_weights(self) -> Optional[Tensor]:
        return None if self.gate is None else T.softmax(self.gate, axis=-1)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got input {x.shape}")
        paths = self.branches(x)
        if self.gate is None:
            out = paths[0]
            for p in paths[1:]:
                out = T.add(out, p)
            return out
        a = self.gate_weights()
        out = None
        for i, p in enumerate(paths):
            term = T.mul(p, T.getitem(a, (slice(None), i)))
            out = term if out is None else T.add(out, term)
        return out


class TemporalFC(Module):
    """Per-position temporal mixing over ``frames * D_t`` vectors; no bias."""

    def __init__(self, channels: int, frames: int, group: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        group = derive_group_width(channels, frames) if group is None else group
        if channels % group:
            raise DivisibilityError(f"temporal group width D_t={group} does not divide C={channels}")
        self.channels = channels
        self.frames = frames
        self.group = group
        self.weight_t = Parameter(trunc_normal(rng, (frames * group, frames * group)), dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-2:] != (self.frames, self.channels):
            raise ValueError(
                f"expected [..., {self.frames}, {self.channels}] input, got {x.shape}"
            )
        return chunk_fc(x, self.weight_t, "temporal", self.frames, self.group)


def morphfc_forward(x: Tensor, layer: MorphFC) -> Tensor:
    return layer(x)


def morphfc_t_forward(x: Tensor, layer: TemporalFC) -> Tensor:
    return layer(x)


def identity_weights(layer: Module) -> None:
    """Set every MorphFC/TemporalFC transform to the identity, biases to 0."""
    for name, p in layer.named_parameters():
        if name.startswith("weight_") or name == "channel.weight":
            p.data = np.eye(p.shape[0], dtype=p.dtype)
        elif name == "channel.bias":
            p.data = np.zeros_like(p.data)

