"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor records the operation that produced it; backward() replays the
tape in reverse topological order and accumulates gradients into every
node, broadcasting-aware for elementwise ops. Only what the transformer
needs is implemented; each fused op (softmax, layer norm, GELU) carries
its analytic backward rule.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple = (),
        backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into the whole tape."""
        if self.data.ndim != 0 and self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
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
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # Operator sugar; scalars and arrays wrap as constant tensors.
    def __add__(self, other) -> "Tensor":
        return add(self, _wrap(other))

    def __radd__(self, other) -> "Tensor":
        return add(_wrap(other), self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, _wrap(other))

    def __rmul__(self, other) -> "Tensor":
        return mul(_wrap(other), self)

    def __neg__(self) -> "Tensor":
        return mul(self, _wrap(-1.0))

    def __sub__(self, other) -> "Tensor":
        return add(self, -_wrap(other))

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported")
        return mul(self, _wrap(1.0 / float(other)))

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over the axes that broadcasting expanded."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _track(*tensors: Tensor) -> bool:
    return any(t.requires_grad or t._parents for t in tensors)


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data
    if not _track(a, b):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        if a.grad is not None:
            a.grad += _unbroadcast(g, a.data.shape)
        if b.grad is not None:
            b.grad += _unbroadcast(g, b.data.shape)

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data
    if not _track(a, b):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        if a.grad is not None:
            a.grad += _unbroadcast(g * b.data, a.data.shape)
        if b.grad is not None:
            b.grad += _unbroadcast(g * a.data, b.data.shape)

    return Tensor(out_data, parents=(a, b), backward=backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batch broadcasting on leading dims."""
    out_data = a.data @ b.data
    if not _track(a, b):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        if a.grad is not None:
            a.grad += _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        if b.grad is not None:
            b.grad += _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)

    return Tensor(out_data, parents=(a, b), backward=backward)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out_data = a.data.transpose(axes)
    if not _track(a):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        a.grad += g.transpose(inverse)

    return Tensor(out_data, parents=(a,), backward=backward)


def swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.data.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    out_data = a.data.reshape(shape)
    if not _track(a):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        a.grad += g.reshape(a.data.shape)

    return Tensor(out_data, parents=(a,), backward=backward)


def tsum(a: Tensor, axis=None) -> Tensor:
    out_data = a.data.sum(axis=axis)
    if not _track(a):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        if axis is None:
            a.grad += g
        else:
            a.grad += np.expand_dims(g, axis)

    return Tensor(out_data, parents=(a,), backward=backward)


def tmean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return tsum(a, axis) / n


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather; backward scatter-adds into the gathered rows."""
    ids = np.asarray(ids)
    out_data = weight.data[ids]
    if not _track(weight):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        np.add.at(weight.grad, ids, g)

    return Tensor(out_data, parents=(weight,), backward=backward)


def pick(a: Tensor, ids: np.ndarray) -> Tensor:
    """a[i, ids[i]] for a 2D tensor; the cross-entropy target gather."""
    ids = np.asarray(ids)
    rows = np.arange(a.data.shape[0])
    out_data = a.data[rows, ids]
    if not _track(a):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        np.add.at(a.grad, (rows, ids), g)

    return Tensor(out_data, parents=(a,), backward=backward)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out_data = exp / exp.sum(axis=-1, keepdims=True)
    if not _track(a):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        inner = (g * out_data).sum(axis=-1, keepdims=True)
        a.grad += out_data * (g - inner)

    return Tensor(out_data, parents=(a,), backward=backward)


def log_softmax(a: Tensor) -> Tensor:
    """Log-softmax over the last axis, numerically stabilized."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - log_z
    if not _track(a):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        a.grad += g - np.exp(out_data) * g.sum(axis=-1, keepdims=True)

    return Tensor(out_data, parents=(a,), backward=backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    norm = centered * inv_std
    out_data = norm * gain.data + bias.data
    if not _track(a, gain, bias):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        if gain.grad is not None:
            gain.grad += _unbroadcast(g * norm, gain.data.shape)
        if bias.grad is not None:
            bias.grad += _unbroadcast(g, bias.data.shape)
        if a.grad is not None:
            gn = g * gain.data
            a.grad += inv_std * (
                gn
                - gn.mean(axis=-1, keepdims=True)
                - norm * (gn * norm).mean(axis=-1, keepdims=True)
            )

    return Tensor(out_data, parents=(a, gain, bias), backward=backward)


def gelu(a: Tensor) -> Tensor:
    """Exact GELU: x/2 * (1 + erf(x/sqrt(2)))."""
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out_data = a.data * cdf
    if not _track(a):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        pdf = _INV_SQRT2PI * np.exp(-0.5 * a.data**2)
        a.grad += g * (cdf + a.data * pdf)

    return Tensor(out_data, parents=(a,), backward=backward)


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only in train mode (p = 0 is the identity)."""
    if p == 0.0:
        return a
    keep = (rng.random(a.data.shape) >= p) / (1.0 - p)
    out_data = a.data * keep
    if not _track(a):
        return Tensor(out_data)

    def backward(g: np.ndarray) -> None:
        a.grad += g * keep

    return Tensor(out_data, parents=(a,), backward=backward)
