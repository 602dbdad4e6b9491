"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def numeric_grad(fn: Callable[[], Tensor], param: Tensor, eps: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = fn().data.item()
        flat[i] = orig - eps
        minus = fn().data.item()
        flat[i] = orig
        out[i] = (plus - minus) / (2.0 * eps)
    return grad


def gradcheck(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
              rtol: float = 1e-4, atol: float = 1e-7) -> float:
    """Compare tape gradients of ``fn()`` against central differences.

    ``fn`` must rebuild its graph on every call.  Returns the worst
    violation ratio ``|a - n| / (atol + rtol * max(|a|, |n|))``; the check
    passes when it is at most 1.
    """
    for p in params:
        p.grad = None
    backward(fn())
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        numeric = numeric_grad(fn, p, eps)
        scale = atol + rtol * np.maximum(np.abs(analytic), np.abs(numeric))
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / scale)))
    return worst
