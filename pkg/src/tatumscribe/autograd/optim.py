"""AdamW with decoupled weight decay."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class AdamWConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-9


class AdamW:
    """AdamW over a ``{name: Tensor}`` mapping.

    Weight decay shrinks each parameter by ``lr * weight_decay`` before the
    bias-corrected Adam update; it never passes through the moments.
    """

    def __init__(self, params: dict[str, Tensor], lr=1e-3, weight_decay=1e-4,
                 beta1=0.9, beta2=0.999, eps=1e-9):
        self.params = dict(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    @classmethod
    def from_config(cls, params, cfg: AdamWConfig) -> "AdamW":
        return cls(params, cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                raise ValueError(f"parameter {name!r} has no gradient; run backward first")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data *= 1.0 - self.lr * self.weight_decay
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
