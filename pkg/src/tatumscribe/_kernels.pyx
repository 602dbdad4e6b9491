# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the loop-heavy kernels in ``_fallback``.

Signatures and semantics match the pure NumPy module exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    return 0.5 * (1.0 + tanh(0.5 * x))


def gru_forward(const double[:, ::1] xp, const double[:, ::1] w_hh, const double[::1] h0):
    cdef int steps = xp.shape[0]
    cdef int hidden = xp.shape[1] // 3
    cdef int two_h = 2 * hidden
    cdef int one = 1
    cdef double d_one = 1.0, d_zero = 0.0
    cdef char trans = b'T'
    cdef Py_ssize_t t, i
    cdef double z
    hs_arr = np.empty((steps, hidden))
    gates_arr = np.empty((steps, 3 * hidden))
    rhs_arr = np.empty((steps, hidden))
    h_arr = np.array(h0, dtype=np.float64)
    acc_arr = np.empty(3 * hidden)
    cdef double[:, ::1] hs = hs_arr
    cdef double[:, ::1] gates = gates_arr
    cdef double[:, ::1] rhs = rhs_arr
    cdef double[::1] h = h_arr
    cdef double[::1] acc = acc_arr
    if steps == 0:
        return hs_arr, gates_arr, rhs_arr
    with nogil:
        for t in range(steps):
            # acc[:2H] = W_rz @ h  (row-major W is a column-major transpose)
            dgemv(&trans, &hidden, &two_h, &d_one, &w_hh[0, 0], &hidden,
                  &h[0], &one, &d_zero, &acc[0], &one)
            for i in range(two_h):
                gates[t, i] = _sigmoid(xp[t, i] + acc[i])
            for i in range(hidden):
                rhs[t, i] = gates[t, i] * h[i]
            dgemv(&trans, &hidden, &hidden, &d_one, &w_hh[two_h, 0], &hidden,
                  &rhs[t, 0], &one, &d_zero, &acc[two_h], &one)
            for i in range(hidden):
                gates[t, two_h + i] = tanh(xp[t, two_h + i] + acc[two_h + i])
                z = gates[t, hidden + i]
                h[i] = (1.0 - z) * gates[t, two_h + i] + z * h[i]
                hs[t, i] = h[i]
    return hs_arr, gates_arr, rhs_arr


def gru_backward(const double[:, ::1] dhs, const double[:, ::1] w_hh, const double[::1] h0,
                 const double[:, ::1] hs, const double[:, ::1] gates):
    cdef int steps = dhs.shape[0]
    cdef int hidden = dhs.shape[1]
    cdef int two_h = 2 * hidden
    cdef int one = 1
    cdef double d_one = 1.0, d_zero = 0.0
    cdef char notrans = b'N'
    cdef Py_ssize_t t, i
    cdef double r, z, n, hp
    dxp_arr = np.empty((steps, 3 * hidden))
    dh_next_arr = np.zeros(hidden)
    dh_arr = np.empty(hidden)
    drh_arr = np.empty(hidden)
    cdef double[:, ::1] dxp = dxp_arr
    cdef double[::1] dh_next = dh_next_arr
    cdef double[::1] dh = dh_arr
    cdef double[::1] drh = drh_arr
    if steps == 0:
        return dxp_arr, dh_next_arr
    with nogil:
        for t in range(steps - 1, -1, -1):
            for i in range(hidden):
                dh[i] = dhs[t, i] + dh_next[i]
                z = gates[t, hidden + i]
                n = gates[t, two_h + i]
                dxp[t, two_h + i] = dh[i] * (1.0 - z) * (1.0 - n * n)
            # drh = U_n.T @ da_n
            dgemv(&notrans, &hidden, &hidden, &d_one, &w_hh[two_h, 0], &hidden,
                  &dxp[t, two_h], &one, &d_zero, &drh[0], &one)
            for i in range(hidden):
                hp = hs[t - 1, i] if t > 0 else h0[i]
                r = gates[t, i]
                z = gates[t, hidden + i]
                n = gates[t, two_h + i]
                dxp[t, i] = drh[i] * hp * r * (1.0 - r)
                dxp[t, hidden + i] = dh[i] * (hp - n) * z * (1.0 - z)
                dh_next[i] = dh[i] * z + drh[i] * r
            # dh_next += W_rz.T @ [da_r, da_z]
            dgemv(&notrans, &hidden, &two_h, &d_one, &w_hh[0, 0], &hidden,
                  &dxp[t, 0], &one, &d_one, &dh_next[0], &one)
    return dxp_arr, dh_next_arr


def tatum_pool_forward(const double[:, ::1] features, const long long[::1] starts,
                       const long long[::1] stops):
    cdef Py_ssize_t depth = features.shape[0]
    cdef Py_ssize_t n_tatums = starts.shape[0]
    cdef Py_ssize_t d, m, t, best_t
    cdef double best
    pooled_arr = np.empty((depth, n_tatums))
    index_arr = np.empty((depth, n_tatums), dtype=np.int64)
    cdef double[:, ::1] pooled = pooled_arr
    cdef long long[:, ::1] index = index_arr
    with nogil:
        for m in range(n_tatums):
            if stops[m] > starts[m]:
                for d in range(depth):
                    best_t = starts[m]
                    best = features[d, best_t]
                    for t in range(starts[m] + 1, stops[m]):
                        if features[d, t] > best:
                            best = features[d, t]
                            best_t = t
                    pooled[d, m] = best
                    index[d, m] = best_t
            else:
                for d in range(depth):
                    pooled[d, m] = pooled[d, m - 1]
                    index[d, m] = index[d, m - 1]
    return pooled_arr, index_arr


def tatum_pool_backward(const double[:, ::1] grad, const long long[:, ::1] index, Py_ssize_t n_frames):
    cdef Py_ssize_t depth = grad.shape[0]
    cdef Py_ssize_t n_tatums = grad.shape[1]
    cdef Py_ssize_t d, m
    out_arr = np.zeros((depth, n_frames))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for d in range(depth):
            for m in range(n_tatums):
                out[d, index[d, m]] += grad[d, m]
    return out_arr


def peak_pick(const double[::1] act, double threshold, Py_ssize_t w1, Py_ssize_t w2,
              Py_ssize_t w3, Py_ssize_t w4, Py_ssize_t w5):
    cdef Py_ssize_t n = act.shape[0]
    cdef Py_ssize_t t, u, lo, hi, count = 0, last = 0
    cdef bint have_last = False
    cdef double v, total, peak
    out_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    with nogil:
        for t in range(n):
            v = act[t]
            lo = t - w1 if t >= w1 else 0
            hi = t + w2 + 1 if t + w2 + 1 < n else n
            peak = act[lo]
            for u in range(lo + 1, hi):
                if act[u] > peak:
                    peak = act[u]
            if v != peak:
                continue
            lo = t - w3 if t >= w3 else 0
            hi = t + w4 + 1 if t + w4 + 1 < n else n
            total = 0.0
            for u in range(lo, hi):
                total = total + act[u]
            if v < total / (hi - lo) + threshold:
                continue
            if have_last and t - last <= w5:
                continue
            out[count] = t
            count += 1
            last = t
            have_last = True
    return out_arr[:count].copy()
