"""Brute-force reference implementations.

Everything here works on plain ``numpy`` arrays with scalar loops and
explicit index arithmetic; nothing is imported from the tensor engine, so
these functions stay an independent ground truth for the fast paths.
They are meant for small extents (<= 16 per axis) and float64 only.
"""

from __future__ import annotations

from typing import Optional

import numpy as np


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2, (a.shape, b.shape)
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def _vecmat(v: list, w: np.ndarray) -> list:
    n = w.shape[1]
    out = [0.0] * n
    for j in range(n):
        acc = 0.0
        for t, vt in enumerate(v):
            acc += vt * w[t, j]
        out[j] = acc
    return out


def naive_direction_fc(x: np.ndarray, weight: np.ndarray, length: int, group: int,
                       vertical: bool = False) -> np.ndarray:
    """One spatial pathway by explicit gather / matmul / scatter.

    Token ``s`` of the scan is at ``(s // W, s % W)`` horizontally or
    ``(s % H, s // H)`` vertically. Scan positions ``>= H*W`` are zero padding.
    """
    h, w, c = x.shape
    tokens = h * w
    num_chunks = (tokens + length - 1) // length

    def pos(s):
        return (s % h, s // h) if vertical else (s // w, s % w)

    out = np.zeros_like(x, dtype=np.float64)
    for i in range(num_chunks):
        for k in range(c // group):
            vec = []
            for l in range(length):
                s = i * length + l
                for d in range(group):
                    if s < tokens:
                        r, col = pos(s)
                        vec.append(float(x[r, col, k * group + d]))
                    else:
                        vec.append(0.0)
            res = _vecmat(vec, weight)
            for l in range(length):
                s = i * length + l
                if s >= tokens:
                    continue
                r, col = pos(s)
                for d in range(group):
                    out[r, col, k * group + d] = res[l * group + d]
    return out


def naive_channel_fc(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    h, w, c = x.shape
    out = np.zeros((h, w, weight.shape[1]))
    for r in range(h):
        for col in range(w):
            res = _vecmat([float(v) for v in x[r, col]], weight)
            for j, v in enumerate(res):
                out[r, col, j] = v + bias[j]
    return out


def naive_morphfc(x: np.ndarray, weight_h: Optional[np.ndarray], weight_v: Optional[np.ndarray],
                  weight_c: Optional[np.ndarray], bias_c: Optional[np.ndarray], length: int,
                  group: int, gate_logits: Optional[np.ndarray] = None) -> np.ndarray:
    """Reference MorphFC on one sample ``x[H, W, C]``.

    Pathways whose weight is ``None`` are omitted. ``gate_logits[C, P]`` (P =
    number of present pathways, order h, v, c) turns the sum into a
    per-channel softmax-weighted sum.
    """
    paths = []
    if weight_h is not None:
        paths.append(naive_direction_fc(x, weight_h, length, group, vertical=False))
    if weight_v is not None:
        paths.append(naive_direction_fc(x, weight_v, length, group, vertical=True))
    if weight_c is not None:
        bias = bias_c if bias_c is not None else np.zeros(weight_c.shape[1])
        paths.append(naive_channel_fc(x, weight_c, bias))
    h, w, c = x.shape
    out = np.zeros((h, w, c))
    if gate_logits is None:
        coeff = np.ones((c, len(paths)))
    else:
        coeff = np.zeros((c, len(paths)))
        for ch in range(c):
            m = max(gate_logits[ch])
            e = [np.exp(z - m) for z in gate_logits[ch]]
            tot = sum(e)
            for p in range(len(paths)):
                coeff[ch, p] = e[p] / tot
    for r in range(h):
        for col in range(w):
            for ch in range(c):
                acc = 0.0
                for p, path in enumerate(paths):
                    acc += coeff[ch, p] * path[r, col, ch]
                out[r, col, ch] = acc
    return out


def naive_morphfc_t(x: np.ndarray, weight_t: np.ndarray, group: int) -> np.ndarray:
    """Reference temporal pathway on ``x[H, W, T, C]``; frame-major chunks."""
    h, w, t, c = x.shape
    out = np.zeros((h, w, t, c))
    for s in range(h * w):
        r, col = s // w, s % w
        for k in range(c // group):
            vec = [float(x[r, col, f, k * group + d]) for f in range(t) for d in range(group)]
            res = _vecmat(vec, weight_t)
            for f in range(t):
                for d in range(group):
                    out[r, col, f, k * group + d] = res[f * group + d]
    return out


def grouped_conv1d_reference(x: np.ndarray, weight: np.ndarray, kernel_len: int, groups: int = 1,
                             padding: int = 0, stride: int = 1,
                             shared_weights: bool = True) -> np.ndarray:
    """1-D grouped convolution over ``x[C_in, N]`` by definition.

    ``shared_weights=True``: ``weight[C_out, C_in/groups, K]`` and one output
    token per window, ``out[o, t] = sum_{i, j} w[o, i, j] * x_pad[g*Cg + i, t*stride + j]``.

    ``shared_weights=False``: every window emits ``K`` output tokens and each
    of them has its own filter, ``weight[K, C_out, C_in/groups, K]``; output
    token ``t*K + q`` uses ``weight[q]``. With ``stride=K`` and no padding this
    is a dense FC on each non-overlapping window.
    """
    c_in, n = x.shape
    cg_in = c_in // groups
    if shared_weights:
        c_out = weight.shape[0]
    else:
        c_out = weight.shape[1]
    cg_out = c_out // groups
    xp = np.zeros((c_in, n + 2 * padding))
    for ci in range(c_in):
        for t in range(n):
            xp[ci, t + padding] = x[ci, t]
    windows = (n + 2 * padding - kernel_len) // stride + 1
    per_window = 1 if shared_weights else kernel_len
    out = np.zeros((c_out, windows * per_window))
    for t in range(windows):
        for q in range(per_window):
            for o in range(c_out):
                g = o // cg_out
                acc = 0.0
                for i in range(cg_in):
                    for j in range(kernel_len):
                        wv = weight[o, i, j] if shared_weights else weight[q, o, i, j]
                        acc += wv * xp[g * cg_in + i, t * stride + j]
                out[o, t * per_window + q] = acc
    return out


def morphfc_as_conv_weight(weight_h: np.ndarray, length: int, group: int) -> np.ndarray:
    """Non-shared conv filters reproducing one group of the horizontal pathway.

    ``weight[q, d_out, d_in, j] = W_h[j*D + d_in, q*D + d_out]``.
    """
    w = np.zeros((length, group, group, length))
    for q in range(length):
        for do in range(group):
            for di in range(group):
                for j in range(length):
                    w[q, do, di, j] = weight_h[j * group + di, q * group + do]
    return w


def block_diagonal(weight: np.ndarray, copies: int) -> np.ndarray:
    """Dense ``kron(I_copies, weight)`` built entry by entry."""
    n = weight.shape[0]
    out = np.zeros((n * copies, n * copies))
    for b in range(copies):
        for i in range(n):
            for j in range(n):
                out[b * n + i, b * n + j] = weight[i, j]
    return out
