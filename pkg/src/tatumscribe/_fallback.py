"""Pure NumPy implementations of the loop-heavy kernels.

These mirror ``_kernels.pyx`` one for one and are used whenever the
compiled extension is unavailable (or ``TATUMSCRIBE_PURE_PYTHON=1``).
All arrays are float64 / int64 and C-contiguous.
"""
import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_forward(xp, w_hh, h0):
    """Run the GRU recurrence over precomputed input projections.

    Parameters
    ----------
    xp : ndarray, shape (T, 3H)
        ``x_t @ W_ih.T + b`` for every step, gate blocks ordered (r, z, n).
    w_hh : ndarray, shape (3H, H)
        Recurrent weights, same block order.
    h0 : ndarray, shape (H,)

    Returns
    -------
    hs : ndarray, shape (T, H)
    gates : ndarray, shape (T, 3H)
        Activated r, z, n per step, kept for the backward pass.
    rhs : ndarray, shape (T, H)
        ``r * h_prev`` per step.
    """
    steps, three_h = xp.shape
    hidden = three_h // 3
    u_rz = w_hh[:2 * hidden]
    u_n = w_hh[2 * hidden:]
    hs = np.empty((steps, hidden))
    gates = np.empty((steps, three_h))
    rhs = np.empty((steps, hidden))
    h = h0
    for t in range(steps):
        rz = _sigmoid(xp[t, :2 * hidden] + u_rz @ h)
        r = rz[:hidden]
        z = rz[hidden:]
        rh = r * h
        n = np.tanh(xp[t, 2 * hidden:] + u_n @ rh)
        h = (1.0 - z) * n + z * h
        hs[t] = h
        gates[t, :2 * hidden] = rz
        gates[t, 2 * hidden:] = n
        rhs[t] = rh
    return hs, gates, rhs


def gru_backward(dhs, w_hh, h0, hs, gates):
    """Backpropagate through time; returns ``(dxp, dh0)``."""
    steps, hidden = dhs.shape
    u_r = w_hh[:hidden]
    u_z = w_hh[hidden:2 * hidden]
    u_n = w_hh[2 * hidden:]
    dxp = np.empty((steps, 3 * hidden))
    dh_next = np.zeros(hidden)
    for t in range(steps - 1, -1, -1):
        h_prev = hs[t - 1] if t > 0 else h0
        r = gates[t, :hidden]
        z = gates[t, hidden:2 * hidden]
        n = gates[t, 2 * hidden:]
        dh = dhs[t] + dh_next
        da_n = dh * (1.0 - z) * (1.0 - n * n)
        drh = u_n.T @ da_n
        da_r = drh * h_prev * r * (1.0 - r)
        da_z = dh * (h_prev - n) * z * (1.0 - z)
        dh_next = dh * z + drh * r + u_r.T @ da_r + u_z.T @ da_z
        dxp[t, :hidden] = da_r
        dxp[t, hidden:2 * hidden] = da_z
        dxp[t, 2 * hidden:] = da_n
    return dxp, dh_next


def tatum_pool_forward(features, starts, stops):
    """Max over each frame window ``[starts[m], stops[m])``.

    An empty window reuses the previous column (value and argmax).  The
    first window must be nonempty.
    """
    depth = features.shape[0]
    n_tatums = starts.shape[0]
    pooled = np.empty((depth, n_tatums))
    index = np.empty((depth, n_tatums), dtype=np.int64)
    rows = np.arange(depth)
    for m in range(n_tatums):
        s, e = starts[m], stops[m]
        if e > s:
            arg = features[:, s:e].argmax(axis=1) + s
            index[:, m] = arg
            pooled[:, m] = features[rows, arg]
        else:
            index[:, m] = index[:, m - 1]
            pooled[:, m] = pooled[:, m - 1]
    return pooled, index


def tatum_pool_backward(grad, index, n_frames):
    depth = grad.shape[0]
    out = np.zeros((depth, n_frames))
    rows = np.repeat(np.arange(depth), grad.shape[1])
    np.add.at(out, (rows, index.reshape(-1)), grad.reshape(-1))
    return out


def peak_pick(act, threshold, w1, w2, w3, w4, w5):
    """Three-condition onset picking on one activation curve.

    A frame ``t`` is selected when it is the maximum of ``act[t-w1 : t+w2]``,
    exceeds the mean of ``act[t-w3 : t+w4]`` by ``threshold``, and lies more
    than ``w5`` frames after the previously selected frame.  Windows include
    both end points and are clipped to the sequence.
    """
    n = act.shape[0]
    picked = []
    last = None
    for t in range(n):
        v = act[t]
        if v != act[max(0, t - w1):min(n, t + w2 + 1)].max():
            continue
        lo, hi = max(0, t - w3), min(n, t + w4 + 1)
        if v < act[lo:hi].sum() / (hi - lo) + threshold:
            continue
        if last is not None and t - last <= w5:
            continue
        picked.append(t)
        last = t
    return np.asarray(picked, dtype=np.int64)
