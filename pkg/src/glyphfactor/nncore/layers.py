"""Stateful layers wrapping the functional primitives.

A layer caches what it needs on ``forward`` and consumes that cache on
``backward``, accumulating parameter gradients into ``Param.grad``.
Parameters are addressed by dotted paths built from attribute names,
e.g. ``decoder.block2.conv1.weight``.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Param(shape={self.value.shape})"


class Module:
    """Base class. Attributes that are ``Param`` or ``Module`` are registered in order."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_cache", None)

    def __setattr__(self, name, value):
        if isinstance(value, Param):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def children(self) -> Iterator[tuple[str, "Module"]]:
        yield from self._modules.items()

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Param]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Param]:
        return [p for _, p in self.named_parameters()]

    def astype(self, dtype) -> "Module":
        """Cast every parameter (and its gradient buffer) in place; returns self."""
        for p in self.parameters():
            p.value = p.value.astype(dtype)
            p.grad = np.zeros_like(p.value)
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0.0

    def _pop_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called before forward")
        cache = self._cache
        self._cache = None
        return cache

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv3x3(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Param(uniform_fan_in(rng, (c_out, c_in, 3, 3), c_in * 9))
        self.bias = Param(np.zeros(c_out))

    def forward(self, x):
        out, self._cache = F.conv3x3_forward(x, self.weight.value, self.bias.value)
        return out

    def backward(self, dout):
        dx, dw, db = F.conv3x3_backward(dout, self._pop_cache())
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class Conv1x1(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Param(uniform_fan_in(rng, (c_out, c_in), c_in))
        self.bias = Param(np.zeros(c_out))

    def forward(self, x):
        out, self._cache = F.conv1x1_forward(x, self.weight.value, self.bias.value)
        return out

    def backward(self, dout):
        dx, dw, db = F.conv1x1_backward(dout, self._pop_cache())
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class TConv2x2(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        super().__init__()
        # each output cell sums exactly c_in terms
        self.weight = Param(uniform_fan_in(rng, (c_in, c_out, 2, 2), c_in))
        self.bias = Param(np.zeros(c_out))

    def forward(self, x):
        out, self._cache = F.tconv2x2_forward(x, self.weight.value, self.bias.value)
        return out

    def backward(self, dout):
        dx, dw, db = F.tconv2x2_backward(dout, self._pop_cache())
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class InstanceNorm(Module):
    def __init__(self, channels: int, eps: float = F.IN_EPS):
        super().__init__()
        self.eps = eps
        self.gain = Param(np.ones(channels))
        self.shift = Param(np.zeros(channels))

    def forward(self, x):
        out, self._cache = F.instance_norm_forward(x, self.gain.value, self.shift.value, self.eps)
        return out

    def backward(self, dout):
        dx, dg, ds = F.instance_norm_backward(dout, self._pop_cache())
        self.gain.grad += dg
        self.shift.grad += ds
        return dx


class BlurPool2x2(Module):
    def forward(self, x):
        out, self._cache = F.blurpool2x2_forward(x)
        return out

    def backward(self, dout):
        return F.blurpool2x2_backward(dout, self._pop_cache())


class ReLU(Module):
    def forward(self, x):
        out, self._cache = F.relu_forward(x)
        return out

    def backward(self, dout):
        return F.relu_backward(dout, self._pop_cache())


class Sigmoid(Module):
    def forward(self, x):
        out, self._cache = F.sigmoid_forward(x)
        return out

    def backward(self, dout):
        return F.sigmoid_backward(dout, self._pop_cache())


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Param(uniform_fan_in(rng, (n_out, n_in), n_in))
        self.bias = Param(np.zeros(n_out))

    def forward(self, x):
        out, self._cache = F.linear_forward(x, self.weight.value, self.bias.value)
        return out

    def backward(self, dout):
        dx, dw, db = F.linear_backward(dout, self._pop_cache())
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class Reshape(Module):
    def __init__(self, *shape: int):
        super().__init__()
        self.shape = shape

    def forward(self, x):
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dout):
        return dout.reshape(self._pop_cache())


class Flatten(Module):
    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._pop_cache())


class Sequential(Module):
    """Chain of named layers; names become path components."""

    def __init__(self, *layers: tuple[str, Module]):
        super().__init__()
        self.order: list[str] = []
        for name, layer in layers:
            self.add(name, layer)

    def add(self, name: str, layer: Module) -> None:
        if name in self._modules:
            raise ValueError(f"duplicate layer name {name!r}")
        setattr(self, name, layer)
        self.order.append(name)

    def forward(self, x):
        for name in self.order:
            x = self._modules[name].forward(x)
        return x

    def backward(self, dout):
        for name in reversed(self.order):
            dout = self._modules[name].backward(dout)
        return dout


class Embedding(Module):
    """Lookup table; rows are shared by every example that indexes them."""

    def __init__(self, num: int, dim: int, rng: np.random.Generator, std: float = 0.01):
        super().__init__()
        self.weight = Param(rng.normal(0.0, std, size=(num, dim)))

    def forward(self, ids):
        ids = np.asarray(ids, dtype=np.intp)
        if ids.size and (ids.min() < 0 or ids.max() >= self.weight.shape[0]):
            raise IndexError(f"embedding id out of range [0, {self.weight.shape[0]})")
        self._cache = ids
        return self.weight.value[ids]

    def backward(self, dout):
        np.add.at(self.weight.grad, self._pop_cache(), dout)
        return None
