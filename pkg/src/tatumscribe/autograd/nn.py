"""Trainable layers built on the tensor engine."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .functional import conv2d, gru_layer
from .tensor import Tensor, matmul, relu


class Module:
    """Container mapping dotted names to parameter tensors."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if isinstance(value, Tensor):
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.data = value.copy()

    def requires_grad_(self, flag: bool) -> "Module":
        for p in self.parameters().values():
            p.requires_grad = flag
        return self


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.weight = Tensor(he_normal(rng, (c_out, c_in, 3, 3), c_in * 9), requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, padding=1)


class GRU(Module):
    """A single GRU layer; weights He-initialised, biases zero."""

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.w_ih = Tensor(he_normal(rng, (3 * hidden, d_in), d_in), requires_grad=True)
        self.w_hh = Tensor(he_normal(rng, (3 * hidden, hidden), hidden), requires_grad=True)
        self.bias = Tensor(np.zeros(3 * hidden), requires_grad=True)

    def __call__(self, x: Tensor, h0: Tensor | None = None) -> Tensor:
        if h0 is None:
            h0 = Tensor(np.zeros(self.hidden))
        return gru_layer(x, self.w_ih, self.w_hh, self.bias, h0)


class GRUStack(Module):
    def __init__(self, d_in: int, hidden: int, n_layers: int, rng: np.random.Generator):
        self.layers = [GRU(d_in if i == 0 else hidden, hidden, rng) for i in range(n_layers)]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class Linear(Module):
    """Affine map ``x @ W + b``; weights drawn from Uniform(0, 1) by default."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, init: str = "uniform"):
        if init == "uniform":
            w = rng.uniform(0.0, 1.0, size=(d_in, d_out))
        elif init == "he":
            w = he_normal(rng, (d_in, d_out), d_in)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight) + self.bias


class ConvEncoder(Module):
    """Stack of 3x3 same-padded convolutions with ReLU after each."""

    def __init__(self, channels, rng: np.random.Generator, c_in: int = 1):
        layers = []
        for c_out in channels:
            layers.append(Conv2d(c_in, c_out, rng))
            c_in = c_out
        self.convs = layers

    def __call__(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = relu(conv(x))
        return x
