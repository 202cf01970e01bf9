"""Minimal reverse-mode differentiation over float64 numpy arrays.

Only the primitives the decoders and the training loss need: broadcast
add/multiply, scalar scale, matrix multiply, transpose, reshape, 1-D slice,
concatenation, 2-D gather, ReLU, full reduce-sum, log-determinant of an SPD
matrix, and transposed 2-D convolution.

Every operation checks its result for NaN/Inf and raises ``NumericError``
otherwise.  ``reduce_sum`` uses exactly rounded (Shewchuk) summation, so its
value is independent of element order; all other reductions have a fixed
order by construction.  The backward pass walks the graph in reverse
topological order, visiting each node exactly once and accumulating parent
gradients additively.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DimensionError, NumericError, UsageError
from . import kernels


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def _check_finite(a: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite result in {op}")
    return a


class Tensor:
    """Immutable-by-convention node in the differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _bw=None):
        self.data = _as_array(data)
        _check_finite(self.data, "tensor")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._bw = _bw

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(data, parents, bw, op: str) -> "Tensor":
        data = _check_finite(_as_array(data), op)
        if any(p.requires_grad for p in parents):
            return Tensor(data, True, _parents=tuple(parents), _bw=bw)
        return Tensor(data)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def relu(self):
        return relu(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def sum(self):
        return reduce_sum(self)

    @property
    def T(self):
        return transpose(self)

    # -- backward -------------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise UsageError("backward() starts from a scalar")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._bw is None:
                continue
            for parent, contrib in zip(node._parents, node._bw(node.grad)):
                if contrib is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += contrib


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- primitives ----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor._from_op(out, (a, b), bw, "add")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return Tensor._from_op(out, (a, b), bw, "mul")


def scale(a, s: float) -> Tensor:
    a = _wrap(a)
    s = float(s)

    def bw(g):
        return (g * s,)

    return Tensor._from_op(a.data * s, (a,), bw, "scale")


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul shapes {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(out, (a, b), bw, "matmul")


def transpose(a) -> Tensor:
    a = _wrap(a)
    if a.data.ndim != 2:
        raise DimensionError("transpose expects a 2-D tensor")

    def bw(g):
        return (g.T,)

    return Tensor._from_op(a.data.T, (a,), bw, "transpose")


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    shape = tuple(int(s) for s in shape)

    def bw(g):
        return (g.reshape(a.data.shape),)

    return Tensor._from_op(a.data.reshape(shape), (a,), bw, "reshape")


def slice1d(a, start: int, length: int) -> Tensor:
    a = _wrap(a)
    if a.data.ndim != 1:
        raise DimensionError("slice1d expects a 1-D tensor")
    if start < 0 or start + length > a.data.size:
        raise DimensionError(f"slice [{start}, {start + length}) out of range {a.data.size}")

    def bw(g):
        full = np.zeros_like(a.data)
        full[start : start + length] = g
        return (full,)

    return Tensor._from_op(a.data[start : start + length].copy(), (a,), bw, "slice1d")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of zero tensors")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def bw(g):
        splits = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        return tuple(splits)

    return Tensor._from_op(out, tuple(tensors), bw, "concat")


def gather2d(a, rows, cols) -> Tensor:
    a = _wrap(a)
    if a.data.ndim != 2:
        raise DimensionError("gather2d expects a 2-D tensor")
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = a.data[np.ix_(rows, cols)]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, np.ix_(rows, cols), g)
        return (full,)

    return Tensor._from_op(out, (a,), bw, "gather2d")


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0.0

    def bw(g):
        return (g * mask,)

    return Tensor._from_op(np.where(mask, a.data, 0.0), (a,), bw, "relu")


def reduce_sum(a) -> Tensor:
    """Sum of all elements, exactly rounded (element-order independent)."""
    a = _wrap(a)
    total = math.fsum(a.data.ravel().tolist())

    def bw(g):
        return (np.full(a.data.shape, float(g)),)

    return Tensor._from_op(np.asarray(total), (a,), bw, "reduce_sum")


def logdet_spd(a) -> Tensor:
    """log det of a symmetric positive-definite matrix, via Cholesky."""
    a = _wrap(a)
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise DimensionError("logdet_spd expects a square matrix")
    try:
        chol = np.linalg.cholesky(a.data)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"matrix is not positive definite: {exc}") from exc
    val = 2.0 * math.fsum(np.log(np.diagonal(chol)).tolist())

    def bw(g):
        inv = np.linalg.inv(a.data)
        return (float(g) * 0.5 * (inv + inv.T),)

    return Tensor._from_op(np.asarray(val), (a,), bw, "logdet_spd")


def conv_transpose2d(x, w, stride: int, padding: int, output_padding: int) -> Tensor:
    """Transposed 2-D convolution of a (n, Cin, H, W) batch with a (Cin, Cout, k, k) kernel."""
    x, w = _wrap(x), _wrap(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise DimensionError("conv_transpose2d expects 4-D input and kernel")
    if x.data.shape[1] != w.data.shape[0]:
        raise DimensionError(
            f"input channels {x.data.shape[1]} != kernel channels {w.data.shape[0]}")
    if w.data.shape[2] != w.data.shape[3]:
        raise DimensionError("only square kernels are supported")
    if output_padding >= stride:
        raise DimensionError(
            f"output_padding {output_padding} must be smaller than stride {stride}")
    kernel = w.data.shape[2]
    in_hw = x.data.shape[2:]
    out = kernels.conv_transpose2d_forward(x.data, w.data, stride, padding, output_padding)

    def bw(g):
        gx = kernels.conv_transpose2d_grad_input(g, w.data, stride, padding, in_hw)
        gw = kernels.conv_transpose2d_grad_weight(g, x.data, stride, padding, kernel)
        return gx, gw

    return Tensor._from_op(out, (x, w), bw, "conv_transpose2d")
