"""Minimal reverse-mode autodiff over numpy arrays.

Just enough machinery to backpropagate the set-prediction loss through the
toy attention network: a Var wraps an ndarray, every op records its parents
and a vector-Jacobian closure, and backward() walks the graph in reverse
topological order. All arithmetic is float64.
"""

from __future__ import annotations

import numpy as np


class Var:
    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    # Arithmetic sugar; scalars and ndarrays are wrapped as constants.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_as_var(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_var(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_as_var(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return pow_const(self, exponent)


def _as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    return Var(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    return Var(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    return Var(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.shape),
            _unbroadcast(g * a.value, b.shape),
        ),
    )


def div(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    return Var(
        a.value / b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.value, a.shape),
            _unbroadcast(-g * a.value / (b.value**2), b.shape),
        ),
    )


def matmul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    return Var(
        a.value @ b.value,
        (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def transpose(a) -> Var:
    a = _as_var(a)
    return Var(a.value.T, (a,), lambda g: (g.T,))


def reshape(a, shape) -> Var:
    a = _as_var(a)
    old = a.shape
    return Var(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat_rows(parts) -> Var:
    parts = [_as_var(p) for p in parts]
    sizes = [p.value.shape[0] for p in parts]

    def vjp(g):
        out, offset = [], 0
        for size in sizes:
            out.append(g[offset : offset + size])
            offset += size
        return tuple(out)

    return Var(np.concatenate([p.value for p in parts], axis=0), tuple(parts), vjp)


def take_rows(a, idx) -> Var:
    a = _as_var(a)
    idx = np.asarray(idx, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)

    return Var(a.value[idx], (a,), vjp)


def take_cols(a, idx) -> Var:
    a = _as_var(a)
    idx = np.asarray(idx, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out.T, idx, g.T)
        return (out,)

    return Var(a.value[:, idx], (a,), vjp)


def softmax_rows(a) -> Var:
    a = _as_var(a)
    shifted = a.value - a.value.max(axis=-1, keepdims=True) if a.value.size else a.value
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True) if a.value.size else e

    def vjp(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return Var(s, (a,), vjp)


def sigmoid(a) -> Var:
    a = _as_var(a)
    s = 1.0 / (1.0 + np.exp(-a.value))
    return Var(s, (a,), lambda g: (g * s * (1.0 - s),))


def relu(a) -> Var:
    a = _as_var(a)
    return Var(np.maximum(a.value, 0.0), (a,), lambda g: (g * (a.value > 0.0),))


def log(a) -> Var:
    a = _as_var(a)
    return Var(np.log(a.value), (a,), lambda g: (g / a.value,))


def pow_const(a, exponent: float) -> Var:
    a = _as_var(a)
    return Var(
        a.value**exponent,
        (a,),
        lambda g: (g * exponent * a.value ** (exponent - 1.0),),
    )


def vsum(a, axis=None, keepdims=False) -> Var:
    a = _as_var(a)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Var(a.value.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def vmean(a, axis=None, keepdims=False) -> Var:
    a = _as_var(a)
    count = a.value.size if axis is None else a.shape[axis]
    return mul(vsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def maximum(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    take_a = a.value >= b.value  # ties go to the first argument
    return Var(
        np.maximum(a.value, b.value),
        (a, b),
        lambda g: (
            _unbroadcast(g * take_a, a.shape),
            _unbroadcast(g * ~take_a, b.shape),
        ),
    )


def minimum(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    take_a = a.value <= b.value
    return Var(
        np.minimum(a.value, b.value),
        (a, b),
        lambda g: (
            _unbroadcast(g * take_a, a.shape),
            _unbroadcast(g * ~take_a, b.shape),
        ),
    )


def clip(a, lo: float, hi: float) -> Var:
    return minimum(maximum(a, lo), hi)


def vabs(a) -> Var:
    a = _as_var(a)
    return Var(np.abs(a.value), (a,), lambda g: (g * np.sign(a.value),))


def backward(root: Var) -> None:
    """Accumulate gradients of a scalar root into every reachable Var."""
    if root.value.size != 1:
        raise ValueError("backward() expects a scalar root")
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        for parent, grad in zip(node._parents, node._vjp(node.grad)):
            if grad is None:
                continue
            if parent.grad is None:
                parent.grad = np.array(grad, dtype=np.float64, copy=True)
            else:
                parent.grad = parent.grad + grad
