"""Pure NumPy reference implementations of the hot kernels.

The compiled extension (_fast) fuses these elementwise loops; everything
here is the semantic contract both backends must satisfy. Matrix products
are deliberately NOT in this layer: callers keep those in BLAS either way.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Clip keeps exp() finite; saturated gates round to exactly 0/1 anyway.
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def lstm_cell_forward(z: np.ndarray, c_prev: np.ndarray):
    """Elementwise half of one LSTM cell step.

    z       (B, 4H) pre-activation gates, chunked [input, forget, cell, output]
    c_prev  (B, H)  previous cell state

    Returns (h, c, cache); cache holds (i, f, g, o, tc) for the backward pass.
    """
    hsize = c_prev.shape[1]
    i = _sigmoid(z[:, 0 * hsize:1 * hsize])
    f = _sigmoid(z[:, 1 * hsize:2 * hsize])
    g = np.tanh(z[:, 2 * hsize:3 * hsize])
    o = _sigmoid(z[:, 3 * hsize:4 * hsize])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, g, o, tc)


def lstm_cell_backward(dh: np.ndarray, dc: np.ndarray, cache, c_prev: np.ndarray):
    """Elementwise half of one LSTM cell backward step.

    dh, dc  (B, H) gradients flowing into h and c at this step
    cache   forward cache for this step
    c_prev  (B, H) previous cell state

    Returns (dz, dc_prev) with dz shaped (B, 4H) to match the forward z.
    """
    i, f, g, o, tc = cache
    do = dh * tc
    dc_total = dc + dh * o * (1.0 - tc * tc)
    di = dc_total * g
    df = dc_total * c_prev
    dg = dc_total * i
    dc_prev = dc_total * f
    dz = np.concatenate(
        (
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ),
        axis=1,
    )
    return dz, dc_prev


def best_split_scan(values: np.ndarray, labels: np.ndarray, w0: float, w1: float):
    """Scan one feature (pre-sorted ascending) for the best weighted-Gini split.

    values  (n,) float64, sorted ascending
    labels  (n,) int64 in {0, 1}, aligned with values
    w0, w1  per-sample class weights

    Returns (impurity, pos): pos is the left-partition size of the best split
    (threshold falls between values[pos-1] and values[pos]), or (inf, -1) when
    no position separates distinct values. Strict < comparison keeps the first
    (lowest-threshold) position on ties.
    """
    n = values.shape[0]
    if n < 2:
        return np.inf, -1
    w = np.where(labels == 1, w1, w0)
    w_pos = np.where(labels == 1, w1, 0.0)
    cum_w = np.cumsum(w)
    cum_w1 = np.cumsum(w_pos)
    total_w = cum_w[-1]
    total_w1 = cum_w1[-1]

    left_w = cum_w[:-1]
    left_w1 = cum_w1[:-1]
    right_w = total_w - left_w
    right_w1 = total_w1 - left_w1
    p1l = left_w1 / left_w
    p1r = right_w1 / right_w
    imp = (left_w * 2.0 * p1l * (1.0 - p1l) + right_w * 2.0 * p1r * (1.0 - p1r)) / total_w
    imp = np.where(values[1:] == values[:-1], np.inf, imp)

    best = imp.min()
    if not np.isfinite(best):
        return np.inf, -1
    pos = int(np.argmax(imp <= best + 1e-12)) + 1
    return float(imp[pos - 1]), pos
