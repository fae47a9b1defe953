"""Parameter containers and the small building blocks shared by every model."""

from __future__ import annotations

import zlib

import numpy as np

from . import tensor as T
from .tensor import Tensor


def rng(seed: int, *stream) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed`` and a stream path.

    Stream items may be ints or strings; strings are folded through crc32 so
    that ``rng(7, "init", 3)`` is stable across processes and platforms.
    """
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for item in stream:
        words.append(zlib.crc32(item.encode()) if isinstance(item, str) else int(item) & 0xFFFFFFFF)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def glorot(gen: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return gen.uniform(-bound, bound, size=shape or (fan_in, fan_out))


class Module:
    """Anything owning parameters.

    Parameters are discovered in attribute declaration order, recursing into
    child modules and lists of modules; that order is the serialization order.
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

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def flat(self) -> np.ndarray:
        ps = self.parameters()
        if not ps:
            return np.zeros(0)
        return np.concatenate([p.data.ravel() for p in ps])

    def load_flat(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        need = sum(p.size for p in self.parameters())
        if values.size != need:
            raise ValueError(f"expected {need} parameter values, got {values.size}")
        pos = 0
        for p in self.parameters():
            p.data = values[pos:pos + p.size].reshape(p.shape).copy()
            pos += p.size

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, fan_in: int, fan_out: int, gen: np.random.Generator, bias: bool = True):
        self.weight = T.tensor(glorot(gen, fan_in, fan_out), requires_grad=True)
        self.bias = T.tensor(np.zeros(fan_out), requires_grad=True) if bias else None

    def __call__(self, x) -> Tensor:
        y = T.matmul(x, self.weight)
        return y if self.bias is None else T.add(y, self.bias)


class LayerNorm(Module):
    """Layer normalization over the last axis with a learned gain and shift."""

    def __init__(self, width: int, eps: float = 1e-5):
        self.gain = T.tensor(np.ones(width), requires_grad=True)
        self.shift = T.tensor(np.zeros(width), requires_grad=True)
        self.eps = eps

    def __call__(self, x) -> Tensor:
        return T.add(T.mul(T.layer_norm(x, axis=-1, eps=self.eps), self.gain), self.shift)


_ACTIVATIONS = {"tanh": T.tanh, "relu": T.relu}


class MLP(Module):
    """Stack of linear layers with an activation between (not after) them."""

    def __init__(self, sizes, gen: np.random.Generator, activation: str = "tanh"):
        self.layers = [Linear(a, b, gen) for a, b in zip(sizes[:-1], sizes[1:])]
        self.activation = activation

    def __call__(self, x) -> Tensor:
        act = _ACTIVATIONS[self.activation]
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = act(x)
        return x
