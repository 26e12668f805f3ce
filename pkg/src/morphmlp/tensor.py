"""Dense tensors with reverse-mode automatic differentiation.

Only the operations the MorphMLP architecture needs are provided. Every
differentiable op records a :class:`Node` carrying a global sequence number;
:func:`backward` replays the reachable nodes in strictly decreasing sequence
order, which is the exact reverse of execution order.
"""

from __future__ import annotations

import itertools
import math
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import erf

ArrayLike = Union[np.ndarray, float, int, Sequence]

_SEQ = itertools.count()
_GRAD_ENABLED = True
_MAC_COUNTER: Optional[list] = None

SQRT_HALF = 1.0 / math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class GraphError(RuntimeError):
    """Raised on misuse of the gradient tape."""


@contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextmanager
def count_macs():
    """Count multiply-accumulates performed by :func:`matmul` inside the block.

    Yields a one-element list whose single entry holds the running total.
    """
    global _MAC_COUNTER
    prev = _MAC_COUNTER
    _MAC_COUNTER = [0]
    try:
        yield _MAC_COUNTER
    finally:
        _MAC_COUNTER = prev


def _as_float_array(data: ArrayLike, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is None:
        dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float64
    arr = np.asarray(arr, dtype=dtype)
    # ascontiguousarray would promote 0-d arrays to 1-d
    return arr if arr.flags.c_contiguous else arr.copy(order="C")


class Node:
    """One executed differentiable operation on the tape."""

    __slots__ = ("seq", "op", "inputs", "backward_fn")

    def __init__(self, op: str, inputs: tuple, backward_fn: Callable):
        self.seq = next(_SEQ)
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tensor:
    """A dense row-major array that may participate in the gradient tape."""

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        self.data = _as_float_array(data, dtype)
        if self.data.dtype not in (np.float32, np.float64):
            raise TypeError(f"unsupported dtype {self.data.dtype}")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None
        self._consumed = False

    # ---- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # ---- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other, self.dtype)))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), neg(self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        raise TypeError("division is only supported by python scalars")

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return permute(self, axes)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)


def tensor(data: ArrayLike, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _wrap(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float64))


def _make(data: np.ndarray, op: str, inputs: tuple, backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = Node(op, inputs, backward_fn)
    return out


def _check_dtypes(a: Tensor, b: Tensor, op: str) -> None:
    if a.dtype != b.dtype:
        raise TypeError(f"{op}: dtype mismatch {a.dtype} vs {b.dtype}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple:
    try:
        out = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None
    # one operand must already have the output shape; no mutual expansion
    if out != a.shape and out != b.shape:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}")
    return out


# ---- elementwise ---------------------------------------------------------
def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _wrap(a, b.dtype)
    if not isinstance(b, Tensor):
        b = _wrap(b, a.dtype)
    if a.ndim and b.ndim:
        _check_dtypes(a, b, "add")
    _broadcast_shape(a, b, "add")
    out_data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out_data, "add", (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes(a, b, "mul")
    _broadcast_shape(a, b, "mul")
    out_data = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out_data, "mul", (a, b), backward)


def scale(x: Tensor, factor: float) -> Tensor:
    factor = x.dtype.type(factor)
    return _make(x.data * factor, "scale", (x,), lambda g: (g * factor,))


def neg(x: Tensor) -> Tensor:
    return _make(-x.data, "neg", (x,), lambda g: (-g,))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with the erf form of the normal CDF."""
    cdf = 0.5 * (1.0 + erf(x.data * SQRT_HALF))
    out_data = (x.data * cdf).astype(x.dtype, copy=False)

    def backward(g):
        pdf = INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf)).astype(x.dtype, copy=False),

    return _make(out_data, "gelu", (x,), backward)


# ---- linear algebra ------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product ``a @ b``."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    _check_dtypes(a, b, "matmul")
    if _MAC_COUNTER is not None:
        _MAC_COUNTER[0] += a.shape[0] * a.shape[1] * b.shape[1]
    out_data = a.data @ b.data

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _make(out_data, "matmul", (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Apply ``x @ weight + bias`` over the last axis of ``x``."""
    lead = x.shape[:-1]
    y = matmul(reshape(x, (-1, x.shape[-1])), weight)
    if bias is not None:
        y = add(y, bias)
    return reshape(y, lead + (weight.shape[1],))


# ---- layout --------------------------------------------------------------
def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out_data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {shape}") from None
    in_shape = x.shape
    return _make(out_data, "reshape", (x,), lambda g: (g.reshape(in_shape),))


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(axes))
    out_data = x.data.transpose(axes).copy(order="C")
    return _make(out_data, "permute", (x,), lambda g: (g.transpose(inverse),))


def getitem(x: Tensor, index) -> Tensor:
    """Basic (slice/integer) indexing; advanced indexing is rejected."""
    idx = index if isinstance(index, tuple) else (index,)
    for i in idx:
        if not (i is None or i is Ellipsis or isinstance(i, (slice, int, np.integer))):
            raise ShapeError(f"getitem: unsupported index {i!r}")
    out_data = np.array(x.data[index], copy=True, order="C")

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] += g
        return full,

    return _make(out_data, "getitem", (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: nothing to concatenate")
    ref = tensors[0]
    axis = axis % ref.ndim
    for t in tensors[1:]:
        _check_dtypes(ref, t, "concat")
        if t.ndim != ref.ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref.shape)) if i != axis
        ):
            raise ShapeError(f"concat: shapes {ref.shape} and {t.shape} differ off axis {axis}")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return _make(out_data, "concat", tuple(tensors), backward)


def pad_zeros(x: Tensor, widths: Sequence[tuple]) -> Tensor:
    """Append/prepend zeros; ``widths`` follows :func:`numpy.pad`."""
    widths = [tuple(w) for w in widths]
    if len(widths) != x.ndim:
        raise ShapeError(f"pad_zeros: {len(widths)} widths for {x.ndim} axes")
    if all(w == (0, 0) for w in widths):
        return x
    out_data = np.pad(x.data, widths)
    crop = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))
    return _make(out_data, "pad", (x,), lambda g: (np.ascontiguousarray(g[crop]),))


# ---- reductions ----------------------------------------------------------
def _norm_axes(axis, ndim) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    out_data = x.data.sum(axis=axes, keepdims=keepdims)
    in_shape = x.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return np.broadcast_to(g, in_shape).copy(),

    return _make(np.asarray(out_data), "sum", (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return scale(sum_(x, axes, keepdims), 1.0 / count)


# ---- fused normalization / softmax --------------------------------------
def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis with population variance."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"layer_norm: channel extent {c} does not match gamma {gamma.shape} / beta {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out_data = xhat * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gx = gg = gb = None
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = rstd * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        if gamma.requires_grad:
            gg = (g * xhat).sum(axis=lead)
        if beta.requires_grad:
            gb = g.sum(axis=lead)
        return gx, gg, gb

    return _make(out_data, "layer_norm", (x, gamma, beta), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return p * (g - (g * p).sum(axis=axis, keepdims=True)),

    return _make(p, "softmax", (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse

    def backward(g):
        p = np.exp(out_data)
        return g - p * g.sum(axis=axis, keepdims=True),

    return _make(out_data, "log_softmax", (x,), backward)


# ---- tape ----------------------------------------------------------------
def tape_of(root: Tensor) -> list[Node]:
    """Nodes reachable from ``root`` in execution order."""
    seen: set[int] = set()
    nodes: list[Node] = []
    stack = [root]
    while stack:
        t = stack.pop()
        node = t._node
        if node is None or id(node) in seen:
            continue
        seen.add(id(node))
        nodes.append(node)
        stack.extend(node.inputs)
    nodes.sort(key=lambda n: n.seq)
    return nodes


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every leaf that requires gradients.

    The graph below ``loss`` is released afterwards; a second call on the
    same loss raises :class:`GraphError`.
    """
    if loss._consumed:
        raise GraphError("backward already ran on this graph; recompute the forward pass")
    if loss.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss is detached from the tape (requires_grad=False)")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if loss._node is None:
        _accumulate(loss, grads[id(loss)])
        loss._consumed = True
        return

    nodes = tape_of(loss)
    # map node -> output tensor is implicit: grads are keyed by tensor id
    owners = {id(loss._node): loss}
    for node in nodes:
        for t in node.inputs:
            if t._node is not None:
                owners[id(t._node)] = t

    for node in reversed(nodes):
        out = owners[id(node)]
        g = grads.pop(id(out), None)
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if t._node is None:
                _accumulate(t, gi)
            elif id(t) in grads:
                grads[id(t)] = grads[id(t)] + gi
            else:
                grads[id(t)] = gi

    for node in nodes:
        node.backward_fn = _released
    loss._consumed = True


def _released(_g):
    raise GraphError("graph was released by a previous backward call")


def _accumulate(leaf: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=leaf.dtype).reshape(leaf.shape)
    if leaf.grad is None:
        leaf.grad = g.copy()
    else:
        leaf.grad = leaf.grad + g


def zeros(shape: Iterable[int], dtype=np.float64, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(tuple(shape), dtype=dtype), requires_grad=requires_grad)


def ones(shape: Iterable[int], dtype=np.float64, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(tuple(shape), dtype=dtype), requires_grad=requires_grad)
