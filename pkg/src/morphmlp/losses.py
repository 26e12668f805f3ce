from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


def cross_entropy(logits: Tensor, labels, label_smoothing: float = 0.0) -> Tensor:
    """Mean over the batch of ``-sum(q * log_softmax(logits))`` with smoothed targets.

    ``q`` puts ``1 - eps + eps/K`` on the true class and ``eps/K`` elsewhere.
    """
    labels = np.asarray(labels, dtype=np.int64)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ValueError(f"expected {b} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    q = np.full((b, k), label_smoothing / k, dtype=logits.dtype)
    q[np.arange(b), labels] += 1.0 - label_smoothing
    logp = T.log_softmax(logits, axis=-1)
    return T.scale(T.sum_(T.mul(logp, Tensor(q))), -1.0 / b)


def accuracy(logits, labels) -> float:
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return float(np.mean(np.argmax(data, axis=-1) == np.asarray(labels)))
