"""Throughput comparison of MorphFC against convolutional token mixers.

The convolution kernels here are vectorized with ``sliding_window_view`` so
the comparison is numpy-vs-numpy; the scalar-loop references live in
:mod:`morphmlp.oracle`. Absolute numbers depend on the machine; only the
relative ordering is of interest.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .morphfc import MorphFC
from .tensor import Tensor, no_grad


def grouped_conv1d_axis(x: np.ndarray, weight: np.ndarray, axis: int) -> np.ndarray:
    """'Same'-padded grouped 1-D conv along spatial ``axis`` (1=H, 2=W) of ``x[B, H, W, C]``.

    ``weight[G, D_in, D_out, K]`` is shared across positions.
    """
    g, d, _, k = weight.shape
    lo = (k - 1) // 2
    widths = [(0, 0)] * 4
    widths[axis] = (lo, k - 1 - lo)
    xp = np.pad(x, widths)
    win = sliding_window_view(xp, k, axis=axis)  # [B, H, W, C, K]
    b, h, w, c, _ = win.shape
    win = win.reshape(b, h, w, g, d, k)
    return np.einsum("bhwgik,giok->bhwgo", win, weight, optimize=True).reshape(b, h, w, c)


def conv2d_3x3(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """'Same'-padded dense 3x3 conv on ``x[B, H, W, C]`` with ``weight[3, 3, C_in, C_out]``."""
    xp = np.pad(x, [(0, 0), (1, 1), (1, 1), (0, 0)])
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # [B, H, W, C, 3, 3]
    return np.einsum("bhwcij,ijco->bhwo", win, weight, optimize=True)


@dataclass
class BenchRow:
    name: str
    params: int
    seconds: float
    batch: int

    @property
    def throughput(self) -> float:
        return self.batch / self.seconds if self.seconds > 0 else float("inf")


def _time(fn: Callable[[], object], repeats: int) -> float:
    fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_token_mixers(height: int, width: int, channels: int, length: int, batch: int = 8,
                       repeats: int = 3, seed: int = 0) -> list[BenchRow]:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((batch, height, width, channels)).astype(np.float32)
    layer = MorphFC(channels, length, gate=False, rng=rng)
    d = layer.group
    g = channels // d
    w_h = rng.standard_normal((g, d, d, length)).astype(np.float32) * 0.02
    w_v = rng.standard_normal((g, d, d, length)).astype(np.float32) * 0.02
    w_c = rng.standard_normal((channels, channels)).astype(np.float32) * 0.02
    w3 = rng.standard_normal((3, 3, channels, channels)).astype(np.float32) * 0.02
    xt = Tensor(x)

    def morph():
        with no_grad():
            layer(xt)

    def group_conv():
        grouped_conv1d_axis(x, w_h, 2) + grouped_conv1d_axis(x, w_v, 1) + x @ w_c

    def conv3():
        conv2d_3x3(x, w3)

    layer_params = sum(p.size for p in layer.parameters())
    return [
        BenchRow("MorphFC", layer_params, _time(morph, repeats), batch),
        BenchRow("Group Conv", w_h.size + w_v.size + w_c.size + channels, _time(group_conv, repeats),
                 batch),
        BenchRow("3x3 Conv", w3.size, _time(conv3, repeats), batch),
    ]
