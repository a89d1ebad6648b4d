# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused elementwise kernels: LSTM cell forward/backward and the RF split scan.

Semantics must match _ref.py exactly; the equivalence tests run both backends
on identical inputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh, INFINITY

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    if x > 60.0:
        x = 60.0
    elif x < -60.0:
        x = -60.0
    return 1.0 / (1.0 + exp(-x))


def lstm_cell_forward(cnp.ndarray[cnp.float64_t, ndim=2] z,
                      cnp.ndarray[cnp.float64_t, ndim=2] c_prev):
    """Fused forward: one pass over (B, H) computes gates, c, tanh(c), h."""
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h = np.empty((B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c = np.empty((B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gi = np.empty((B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gf = np.empty((B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gg = np.empty((B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] go = np.empty((B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tc = np.empty((B, H))
    cdef Py_ssize_t b, j
    cdef double iv, fv, gv, ov, cv, tv
    with nogil:
        for b in range(B):
            for j in range(H):
                iv = _sigmoid(z[b, j])
                fv = _sigmoid(z[b, H + j])
                gv = tanh(z[b, 2 * H + j])
                ov = _sigmoid(z[b, 3 * H + j])
                cv = fv * c_prev[b, j] + iv * gv
                tv = tanh(cv)
                gi[b, j] = iv
                gf[b, j] = fv
                gg[b, j] = gv
                go[b, j] = ov
                c[b, j] = cv
                tc[b, j] = tv
                h[b, j] = ov * tv
    return h, c, (gi, gf, gg, go, tc)


def lstm_cell_backward(cnp.ndarray[cnp.float64_t, ndim=2] dh,
                       cnp.ndarray[cnp.float64_t, ndim=2] dc,
                       cache,
                       cnp.ndarray[cnp.float64_t, ndim=2] c_prev):
    """Fused backward: one pass produces dz (B, 4H) and dc_prev (B, H)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gi = cache[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gf = cache[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] gg = cache[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] go = cache[3]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tc = cache[4]
    cdef Py_ssize_t B = dh.shape[0]
    cdef Py_ssize_t H = dh.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dz = np.empty((B, 4 * H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dc_prev = np.empty((B, H))
    cdef Py_ssize_t b, j
    cdef double iv, fv, gv, ov, tv, dov, dct, div, dfv, dgv
    with nogil:
        for b in range(B):
            for j in range(H):
                iv = gi[b, j]
                fv = gf[b, j]
                gv = gg[b, j]
                ov = go[b, j]
                tv = tc[b, j]
                dov = dh[b, j] * tv
                dct = dc[b, j] + dh[b, j] * ov * (1.0 - tv * tv)
                div = dct * gv
                dfv = dct * c_prev[b, j]
                dgv = dct * iv
                dc_prev[b, j] = dct * fv
                dz[b, j] = div * iv * (1.0 - iv)
                dz[b, H + j] = dfv * fv * (1.0 - fv)
                dz[b, 2 * H + j] = dgv * (1.0 - gv * gv)
                dz[b, 3 * H + j] = dov * ov * (1.0 - ov)
    return dz, dc_prev


def best_split_scan(cnp.ndarray[cnp.float64_t, ndim=1] values,
                    cnp.ndarray[cnp.int64_t, ndim=1] labels,
                    double w0,
                    double w1):
    """Two-pass scan over a pre-sorted feature column.

    Pass one computes impurity per split position via running prefix sums
    (same accumulation order as the reference's cumsum, so values match
    bit for bit); pass two takes the first position within 1e-12 of the
    minimum, which is the lowest-threshold tie rule.
    """
    cdef Py_ssize_t n = values.shape[0]
    if n < 2:
        return INFINITY, -1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] imp = np.empty(n - 1)
    cdef double total_w = 0.0, total_w1 = 0.0
    cdef double left_w = 0.0, left_w1 = 0.0, right_w, right_w1
    cdef double p1l, p1r
    cdef double best = INFINITY
    cdef Py_ssize_t pos, best_pos = -1
    with nogil:
        for pos in range(n):
            if labels[pos] == 1:
                total_w += w1
                total_w1 += w1
            else:
                total_w += w0
        for pos in range(1, n):
            if labels[pos - 1] == 1:
                left_w += w1
                left_w1 += w1
            else:
                left_w += w0
            if values[pos - 1] == values[pos]:
                imp[pos - 1] = INFINITY
                continue
            right_w = total_w - left_w
            right_w1 = total_w1 - left_w1
            p1l = left_w1 / left_w
            p1r = right_w1 / right_w
            imp[pos - 1] = (left_w * 2.0 * p1l * (1.0 - p1l)
                            + right_w * 2.0 * p1r * (1.0 - p1r)) / total_w
            if imp[pos - 1] < best:
                best = imp[pos - 1]
        if best < INFINITY:
            for pos in range(1, n):
                if imp[pos - 1] <= best + 1e-12:
                    best_pos = pos
                    break
    if best_pos < 0:
        return INFINITY, -1
    return float(imp[best_pos - 1]), best_pos
