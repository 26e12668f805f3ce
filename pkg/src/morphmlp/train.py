"""Desk-scale training loop, evaluation and the plain-text metrics log."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from os import PathLike
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from .data import DatasetSpec, batches
from .losses import accuracy, cross_entropy
from .nn import DropPath, Module
from .optim import AdamW, Schedule, cosine_lr
from .tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at step {step}")
        self.step = step


@dataclass(frozen=True)
class StepRecord:
    step: int
    lr: float
    loss: float
    acc: float

    def to_line(self) -> str:
        # repr() of a float is locale-independent and round-trips exactly
        return f"step={self.step} lr={self.lr!r} loss={self.loss!r} acc={self.acc!r}"

    @classmethod
    def from_line(cls, line: str) -> "StepRecord":
        fields = dict(part.split("=", 1) for part in line.split())
        return cls(int(fields["step"]), float(fields["lr"]), float(fields["loss"]),
                   float(fields["acc"]))


def write_metrics(records: Iterable[StepRecord], path: Union[str, PathLike]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for r in records:
            fh.write(r.to_line() + "\n")


def read_metrics(path: Union[str, PathLike]) -> list[StepRecord]:
    with open(path, encoding="ascii") as fh:
        return [StepRecord.from_line(line) for line in fh if line.strip()]


def reseed_drop_path(model: Module, seed: int) -> None:
    for i, m in enumerate(m for m in model.modules() if isinstance(m, DropPath)):
        m.rng = np.random.default_rng([seed, i])


def train_loop(model: Module, data: Union[DatasetSpec, Iterator], optimizer: AdamW,
               schedule: Schedule, steps: int, seed: int = 0, label_smoothing: float = 0.0,
               log_every: int = 0) -> list[StepRecord]:
    """Run ``steps`` optimizer steps; returns one record per step.

    With a fixed ``seed`` (and a deterministic data stream) the returned log is
    bitwise reproducible.
    """
    stream = batches(data) if isinstance(data, DatasetSpec) else data
    reseed_drop_path(model, seed)
    model.train()
    dtype = model.parameters()[0].dtype
    records = []
    for step in range(steps):
        x, y = next(stream)
        lr = cosine_lr(step, schedule)
        optimizer.zero_grad()
        logits = model(Tensor(np.asarray(x, dtype=dtype)))
        loss = cross_entropy(logits, y, label_smoothing)
        value = loss.item()
        if not math.isfinite(value):
            raise DivergenceError(step, value)
        backward(loss)
        optimizer.step(lr)
        rec = StepRecord(step, lr, value, accuracy(logits, y))
        records.append(rec)
        if log_every and step % log_every == 0:
            logger.info(rec.to_line())
    return records


def evaluate(model: Module, data: Union[DatasetSpec, Iterator], num_batches: int = 8) -> float:
    stream = batches(data) if isinstance(data, DatasetSpec) else data
    model.eval()
    dtype = model.parameters()[0].dtype
    correct = total = 0
    with no_grad():
        for _ in range(num_batches):
            x, y = next(stream)
            logits = model(Tensor(np.asarray(x, dtype=dtype)))
            correct += int(np.sum(np.argmax(logits.data, axis=-1) == y))
            total += len(y)
    model.train()
    return correct / max(total, 1)


def tail_accuracy(records: list[StepRecord], window: int = 25) -> float:
    """Mean per-step training accuracy over the last ``window`` steps."""
    tail = records[-window:]
    return float(np.mean([r.acc for r in tail])) if tail else 0.0
