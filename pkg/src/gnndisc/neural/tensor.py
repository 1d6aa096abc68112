"""A small reverse-mode automatic differentiation engine over numpy arrays.

Every operation records its parents and a closure that maps the output
gradient to parent gradients. ``Tensor.backward`` walks the recorded graph in
reverse topological order. Inside :func:`no_grad` nothing is recorded.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from . import kernels

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
        return None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take_rows(self, idx)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple, backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)
    return _result(a.data.sum(axis=axis), (a,), back)


def reshape(a: Tensor, shape) -> Tensor:
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                   lambda g: tuple(np.split(g, sizes, axis=axis)))


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows (first axis) by an integer index array."""
    idx = np.asarray(idx, dtype=np.int64)
    n = a.shape[0]

    def back(g):
        flat = np.ascontiguousarray(g.reshape(len(idx), -1))
        return (kernels.scatter_add_rows(flat, idx, n).reshape(a.shape),)
    return _result(a.data[idx], (a,), back)


def segment_sum(a: Tensor, index: np.ndarray, n: int) -> Tensor:
    """Sum the rows of ``a`` into ``n`` buckets given by ``index``."""
    flat = np.ascontiguousarray(a.data.reshape(a.shape[0], -1))
    out = kernels.scatter_add_rows(flat, index, n).reshape((n,) + a.shape[1:])
    return _result(out, (a,), lambda g: (g[index],))


def segment_softmax(scores: Tensor, index: np.ndarray, n: int) -> Tensor:
    """Softmax over edges grouped by destination; ``scores`` is (E, H)."""
    alpha = kernels.segment_softmax(np.ascontiguousarray(scores.data), index, n)
    return _result(alpha, (scores,),
                   lambda g: (kernels.segment_softmax_backward(alpha, np.ascontiguousarray(g), index, n),))


def attend(alpha: Tensor, z: Tensor, src: np.ndarray, dst: np.ndarray, n: int) -> Tensor:
    """Attention-weighted aggregation: out[dst] += alpha[e, k] * z[src] (per head k)."""
    zd = np.ascontiguousarray(z.data)
    ad = np.ascontiguousarray(alpha.data)
    out = kernels.attend(ad, zd, src, dst, n)
    return _result(out, (alpha, z),
                   lambda g: kernels.attend_backward(np.ascontiguousarray(g), ad, zd, src, dst))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.data > 0, 1.0, slope)
    return _result(a.data * factor, (a,), lambda g: (g * factor,))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(a)); ``softplus(-x) = -log sigmoid(x)``."""
    return _result(np.logaddexp(0.0, a.data), (a,), lambda g: (g * _sigmoid(a.data),))


def log_softmax(a: Tensor) -> Tensor:
    """Log-softmax of a 1-d tensor."""
    x = a.data
    lse = np.logaddexp.reduce(x)
    out = x - lse
    p = np.exp(out)
    return _result(out, (a,), lambda g: (g - p * g.sum(),))


def pick(a: Tensor, i: int) -> Tensor:
    """Element ``i`` of a 1-d tensor as a scalar tensor."""
    def back(g):
        full = np.zeros_like(a.data)
        full[i] = g
        return (full,)
    return _result(a.data[i], (a,), back)
