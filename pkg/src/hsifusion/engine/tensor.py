"""Minimal reverse-mode differentiation on top of numpy arrays.

Every op builds a node holding its output array, its parent tensors and a
closure mapping the output gradient to parent gradients.  ``backward`` walks
the graph in a fixed topological order, so gradient accumulation is
deterministic.  Leaf tensors accumulate into ``.grad`` across calls; clear them
with ``zero_grad`` between steps.
"""
from __future__ import annotations

import contextlib
import threading

import numpy as np
from scipy.special import expit

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

_state = threading.local()


class ContractError(ValueError):
    """Raised when an op receives inputs that violate its shape contract."""


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _as_array(value, dtype=None) -> np.ndarray:
    arr = np.asarray(value)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other, self)))

    def __rsub__(self, other):
        return add(_lift(other, self), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    # -- differentiation --------------------------------------------------
    def backward(self) -> None:
        if self.data.size != 1 or self.data.ndim > 1:
            raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _topological_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def make_node(data: np.ndarray, parents, backward) -> Tensor:
    """Wrap an op result; records the graph only when a parent needs gradients."""
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise ops ---------------------------------------------------------

def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make_node(a.data + b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return make_node(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)

    def backward(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data * b.data, (a, b), backward)


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return make_node(out, (a,), lambda g: (-g * out * out,))


def square(a: Tensor) -> Tensor:
    return make_node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)
    return make_node(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_node(out, (x,), lambda g: (g * (1.0 - out * out),))


def selu(x: Tensor) -> Tensor:
    pos = x.data > 0
    expx = np.exp(np.minimum(x.data, 0.0))
    out = SELU_LAMBDA * np.where(pos, x.data, SELU_ALPHA * (expx - 1.0))
    deriv = SELU_LAMBDA * np.where(pos, 1.0, SELU_ALPHA * expx).astype(x.dtype)
    return make_node(out.astype(x.dtype, copy=False), (x,), lambda g: (g * deriv,))


def softmax(x: Tensor, axis: int = 0) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (x,), backward)


def l2_normalize(x: Tensor, axis: int = 0, eps: float = 1e-6) -> Tensor:
    """``x / sqrt(sum(x**2, axis) + eps)``."""
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True) + eps)
    out = x.data / norm

    def backward(g):
        return ((g - out * (g * out).sum(axis=axis, keepdims=True)) / norm,)

    return make_node(out, (x,), backward)


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "selu": selu}


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ContractError(f"unknown activation {kind!r}") from None
    return fn(x)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip values; gradient passes only where the input is strictly inside."""
    inside = (x.data > lo) & (x.data < hi)
    return make_node(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


# -- reductions and shape ops ------------------------------------------------

def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)

    return make_node(np.asarray(out), (x,), backward)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis=axis, keepdims=keepdims) * (1.0 / float(n))


def reshape(x: Tensor, shape) -> Tensor:
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def broadcast_to(x: Tensor, shape) -> Tensor:
    out = np.broadcast_to(x.data, shape)
    return make_node(out, (x,), lambda g: (unbroadcast(g, x.shape),))


def getitem(x: Tensor, index) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        full[index] += g
        return (full,)

    return make_node(x.data[index], (x,), backward)


def flip(x: Tensor, axis: int) -> Tensor:
    return make_node(np.flip(x.data, axis), (x,), lambda g: (np.flip(g, axis),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ContractError(f"concat: {exc}") from None
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return make_node(out, tensors, backward)


def split(x: Tensor, sections: int, axis: int = 0) -> list:
    n = x.shape[axis]
    if n % sections:
        raise ContractError(f"cannot split axis of length {n} into {sections}")
    step = n // sections
    out = []
    for i in range(sections):
        index = [slice(None)] * x.ndim
        index[axis] = slice(i * step, (i + 1) * step)
        out.append(getitem(x, tuple(index)))
    return out


def smooth_l1(pred: Tensor, target) -> Tensor:
    """Mean Huber-style loss with transition at |d| = 1."""
    target_data = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    if pred.shape != target_data.shape:
        raise ContractError(f"smooth_l1 shape mismatch {pred.shape} vs {target_data.shape}")
    d = pred.data - target_data
    ad = np.abs(d)
    small = ad < 1.0
    per = np.where(small, 0.5 * d * d, ad - 0.5)
    n = d.size
    local = np.where(small, d, np.sign(d)) / n

    def backward(g):
        return (g * local,)

    return make_node(np.asarray(per.mean(), dtype=pred.dtype), (pred,), backward)
