"""Parameter containers for network building blocks."""
from __future__ import annotations

import numpy as np

from .conv import conv2d
from .tensor import Tensor, selu


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """Base class: every Tensor attribute with ``requires_grad`` is a parameter.

    Parameters and submodules are discovered in attribute insertion order, so
    ``named_parameters`` is stable for a given construction sequence.
    """

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def state_dict(self) -> dict:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype, copy=True)

    def to(self, dtype) -> "Module":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        return self

    def zero_(self) -> "Module":
        for p in self.parameters():
            p.data[...] = 0
        return self


def param(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Conv2d(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, dtype=np.float32, zero=False):
        shape = (c_out, c_in, k, k)
        w = np.zeros(shape, dtype) if zero else uniform_init(rng, shape, c_in * k * k, dtype)
        self.weight = param(w)
        self.bias = param(np.zeros(c_out, dtype))
        self.stride = stride
        self.padding = k // 2

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvSelu(Conv2d):
    def __call__(self, x: Tensor) -> Tensor:
        return selu(super().__call__(x))
