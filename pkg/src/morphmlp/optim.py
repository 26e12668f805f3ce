"""AdamW with decoupled weight decay and a warmup + cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .nn import Parameter


@dataclass(frozen=True)
class Schedule:
    base_lr: float
    total_steps: int
    warmup_steps: int = 0
    floor_lr: float = 0.0

    def __post_init__(self):
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ValueError("need 0 <= warmup_steps <= total_steps")


def cosine_lr(step: int, schedule: Schedule) -> float:
    """Linear warmup (``base * (step+1) / warmup``) then cosine decay to the floor."""
    s = schedule
    if step < s.warmup_steps:
        return s.base_lr * (step + 1) / s.warmup_steps
    span = s.total_steps - s.warmup_steps
    progress = 1.0 if span == 0 else min(1.0, (step - s.warmup_steps) / span)
    return s.floor_lr + (s.base_lr - s.floor_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class OptimizerState:
    exp_avg: list[np.ndarray]
    exp_avg_sq: list[np.ndarray]
    step: int = 0


class AdamW:
    """Bias-corrected Adam with decoupled weight decay.

    Decay applies only to parameters whose ``decay`` flag is set; norms,
    biases and gate logits are created with ``decay=False``.
    """

    def __init__(self, named_params: Iterable[tuple[str, Parameter]], lr: float = 1e-3,
                 betas: Sequence[float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.05):
        self.named_params = list(named_params)
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = OptimizerState(
            exp_avg=[np.zeros_like(p.data) for _, p in self.named_params],
            exp_avg_sq=[np.zeros_like(p.data) for _, p in self.named_params],
        )

    def zero_grad(self) -> None:
        for _, p in self.named_params:
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        for name, p in self.named_params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(f"non-finite gradient in parameter {name}")
        self.state.step += 1
        t = self.state.step
        bc1 = 1.0 - b1 ** t
        bc2 = 1.0 - b2 ** t
        for i, (_, p) in enumerate(self.named_params):
            g = p.grad
            if g is None:
                continue
            m = self.state.exp_avg[i]
            v = self.state.exp_avg_sq[i]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if self.weight_decay and getattr(p, "decay", True):
                p.data *= 1.0 - lr * self.weight_decay
            denom = np.sqrt(v / bc2) + self.eps
            p.data -= (lr * (m / bc1) / denom).astype(p.dtype, copy=False)


def adamw_step(optimizer: AdamW, lr: float | None = None) -> None:
    optimizer.step(lr)
