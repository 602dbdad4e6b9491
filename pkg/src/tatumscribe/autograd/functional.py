"""Fused differentiable operations: convolution, GRU recurrence, window max-pooling."""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import DimensionError
from .tensor import Tensor, as_tensor, custom_op, matmul, transpose


def _im2col(xpad: np.ndarray, kh: int, kw: int, out_h: int, out_w: int) -> np.ndarray:
    channels = xpad.shape[0]
    cols = np.empty((channels, kh, kw, out_h, out_w))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xpad[:, i:i + out_h, j:j + out_w]
    return cols.reshape(channels * kh * kw, out_h * out_w)


def conv2d(x, kernels_, bias, padding: int = 1) -> Tensor:
    """Stride-1 2-D cross-correlation of a ``C_in x H x W`` input plus bias.

    Parameters
    ----------
    x : Tensor, shape (C_in, H, W)
    kernels_ : Tensor, shape (C_out, C_in, 3, 3)
    bias : Tensor, shape (C_out,)
    padding : int
        Zero padding on each spatial side; 1 keeps the spatial size.
    """
    x, w, b = as_tensor(x), as_tensor(kernels_), as_tensor(bias)
    if x.ndim != 3:
        raise DimensionError(f"conv2d input must be C x H x W, got shape {x.shape}")
    if w.ndim != 4:
        raise DimensionError(f"conv2d kernels must be 4-D, got shape {w.shape}")
    c_out, c_in, kh, kw = w.shape
    if (kh, kw) != (3, 3):
        raise DimensionError(f"conv2d kernel spatial axes (2, 3) must be 3x3, got {kh}x{kw}")
    if x.shape[0] != c_in:
        raise DimensionError(
            f"conv2d channel axis mismatch: input axis 0 has {x.shape[0]}, "
            f"kernels axis 1 has {c_in}")
    if b.shape != (c_out,):
        raise DimensionError(f"conv2d bias axis 0 must have {c_out} entries, got shape {b.shape}")
    _, height, width = x.shape
    out_h, out_w = height + 2 * padding - kh + 1, width + 2 * padding - kw + 1
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"conv2d input {x.shape} too small for padding {padding}")

    xpad = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xpad, kh, kw, out_h, out_w)
    wmat = w.data.reshape(c_out, -1)
    out = wmat @ cols + b.data[:, None]

    def backward(g):
        g = g.reshape(c_out, -1)
        gw = (g @ cols.T).reshape(w.shape) if w.requires_grad else None
        gb = g.sum(axis=1) if b.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (wmat.T @ g).reshape(c_in, kh, kw, out_h, out_w)
            dpad = np.zeros_like(xpad)
            for i in range(kh):
                for j in range(kw):
                    dpad[:, i:i + out_h, j:j + out_w] += dcols[:, i, j]
            gx = dpad[:, padding:padding + height, padding:padding + width]
        return gx, gw, gb

    return custom_op(out.reshape(c_out, out_h, out_w), (x, w, b), backward, "conv2d")


def gru_recurrence(xp, w_hh, h0) -> Tensor:
    """Hidden-state sequence of a GRU given precomputed input projections.

    ``xp`` is ``T x 3H`` with gate blocks ordered (reset, update, candidate).
    The reset gate scales the previous state before the candidate's
    recurrent projection::

        r = sigmoid(xp_r + U_r h)        z = sigmoid(xp_z + U_z h)
        n = tanh(xp_n + U_n (r * h))     h' = (1 - z) * n + z * h
    """
    xp, w_hh, h0 = as_tensor(xp), as_tensor(w_hh), as_tensor(h0)
    if xp.ndim != 2 or xp.shape[1] % 3:
        raise DimensionError(f"GRU projections must be T x 3H, got shape {xp.shape}")
    hidden = xp.shape[1] // 3
    if w_hh.shape != (3 * hidden, hidden):
        raise DimensionError(
            f"GRU recurrent weights must be {(3 * hidden, hidden)}, got {w_hh.shape}")
    if h0.shape != (hidden,):
        raise DimensionError(f"GRU initial state axis 0 must be {hidden}, got {h0.shape}")

    xp_data = np.ascontiguousarray(xp.data)
    w_data = np.ascontiguousarray(w_hh.data)
    h0_data = np.ascontiguousarray(h0.data)
    hs, gates, rhs = kernels.gru_forward(xp_data, w_data, h0_data)

    def backward(g):
        dxp, dh0 = kernels.gru_backward(np.ascontiguousarray(g), w_data, h0_data, hs, gates)
        dw = None
        if w_hh.requires_grad:
            h_prev = np.vstack([h0_data[None, :], hs[:-1]])
            dw = np.vstack([dxp[:, :2 * hidden].T @ h_prev, dxp[:, 2 * hidden:].T @ rhs])
        return dxp, dw, dh0

    return custom_op(hs, (xp, w_hh, h0), backward, "gru")


def gru_layer(inputs, w_ih, w_hh, bias, h0) -> Tensor:
    """One unidirectional GRU layer over a ``T x D_in`` sequence.

    ``w_ih`` is ``3H x D_in``, ``w_hh`` is ``3H x H`` and ``bias`` is ``3H``.
    """
    inputs, w_ih = as_tensor(inputs), as_tensor(w_ih)
    if inputs.ndim != 2:
        raise DimensionError(f"GRU inputs must be T x D_in, got shape {inputs.shape}")
    if w_ih.ndim != 2 or w_ih.shape[1] != inputs.shape[1]:
        raise DimensionError(
            f"GRU input axis 1 has {inputs.shape[1]} features but input weights "
            f"have shape {w_ih.shape}")
    xp = matmul(inputs, transpose(w_ih)) + bias
    return gru_recurrence(xp, w_hh, h0)


def window_max(features, starts: np.ndarray, stops: np.ndarray) -> Tensor:
    """Max over frame windows ``[starts[m], stops[m])`` for each feature row.

    Empty windows repeat the previous column.  The gradient of each output
    goes to the frame that attained the maximum.
    """
    f = as_tensor(features)
    if f.ndim != 2:
        raise DimensionError(f"window_max expects D x T features, got shape {f.shape}")
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    stops = np.ascontiguousarray(stops, dtype=np.int64)
    if starts.shape != stops.shape or starts.ndim != 1 or starts.size == 0:
        raise DimensionError("window bounds must be two equal-length nonempty vectors")
    if stops[0] <= starts[0]:
        raise DimensionError("the first pooling window must be nonempty")
    n_frames = f.shape[1]
    if starts.min() < 0 or stops.max() > n_frames:
        raise DimensionError(f"pooling windows exceed the {n_frames}-frame axis")
    pooled, index = kernels.tatum_pool_forward(np.ascontiguousarray(f.data), starts, stops)

    def backward(g):
        return (kernels.tatum_pool_backward(np.ascontiguousarray(g), index, n_frames),)

    return custom_op(pooled, (f,), backward, "window_max")
