"""Numba-compiled implementations of the hot kernels.

Same contracts as ``numpy_backend``; the recurrence and the scatter are
written as explicit loops so the whole step runs inside one compiled
function instead of a chain of small NumPy calls.
"""

import numpy as np
from numba import njit

BACKEND_NAME = "numba"


@njit(cache=True)
def _sigmoid_scalar(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def lstm_forward(x, w, b, h0, c0, length):
    steps = x.shape[0]
    hidden = w.shape[1] // 4
    wh = np.ascontiguousarray(w[:hidden])
    wx = np.ascontiguousarray(w[hidden:])
    xproj = np.dot(x, wx)

    h = np.zeros((steps, hidden), dtype=x.dtype)
    f = np.zeros((steps, hidden), dtype=x.dtype)
    i = np.zeros((steps, hidden), dtype=x.dtype)
    g = np.zeros((steps, hidden), dtype=x.dtype)
    o = np.zeros((steps, hidden), dtype=x.dtype)
    c = np.zeros((steps, hidden), dtype=x.dtype)
    tc = np.zeros((steps, hidden), dtype=x.dtype)

    h_prev = h0.copy()
    c_prev = c0.copy()
    for t in range(length):
        z = np.dot(h_prev, wh)
        for j in range(4 * hidden):
            z[j] += xproj[t, j] + b[j]
        for j in range(hidden):
            f[t, j] = _sigmoid_scalar(z[j])
            i[t, j] = _sigmoid_scalar(z[hidden + j])
            g[t, j] = np.tanh(z[2 * hidden + j])
            o[t, j] = _sigmoid_scalar(z[3 * hidden + j])
            c[t, j] = f[t, j] * c_prev[j] + i[t, j] * g[t, j]
            tc[t, j] = np.tanh(c[t, j])
            h[t, j] = o[t, j] * tc[t, j]
        h_prev = h[t]
        c_prev = c[t]
    for t in range(length, steps):
        for j in range(hidden):
            h[t, j] = h[length - 1, j]
            c[t, j] = c[length - 1, j]
    return h, f, i, g, o, c, tc


@njit(cache=True)
def lstm_backward(dh_out, x, w, h0, c0, length, h, f, i, g, o, c, tc):
    steps = x.shape[0]
    d_in = x.shape[1]
    hidden = w.shape[1] // 4
    wh = np.ascontiguousarray(w[:hidden])
    wx = np.ascontiguousarray(w[hidden:])

    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = np.zeros(4 * hidden, dtype=x.dtype)
    dz = np.zeros(4 * hidden, dtype=x.dtype)

    dh_acc = np.zeros(hidden, dtype=x.dtype)
    dc_acc = np.zeros(hidden, dtype=x.dtype)
    for t in range(length, steps):
        for j in range(hidden):
            dh_acc[j] += dh_out[t, j]

    for t in range(length - 1, -1, -1):
        for j in range(hidden):
            dh = dh_out[t, j] + dh_acc[j]
            do = dh * tc[t, j]
            dc = dc_acc[j] + dh * o[t, j] * (1.0 - tc[t, j] * tc[t, j])
            c_prev = c[t - 1, j] if t > 0 else c0[j]
            dz[j] = dc * c_prev * f[t, j] * (1.0 - f[t, j])
            dz[hidden + j] = dc * g[t, j] * i[t, j] * (1.0 - i[t, j])
            dz[2 * hidden + j] = dc * i[t, j] * (1.0 - g[t, j] * g[t, j])
            dz[3 * hidden + j] = do * o[t, j] * (1.0 - o[t, j])
            db[j] += dz[j]
            db[hidden + j] += dz[hidden + j]
            db[2 * hidden + j] += dz[2 * hidden + j]
            db[3 * hidden + j] += dz[3 * hidden + j]
            dc_acc[j] = dc * f[t, j]
        for r in range(hidden):
            hp = h[t - 1, r] if t > 0 else h0[r]
            for col in range(4 * hidden):
                dw[r, col] += hp * dz[col]
        for r in range(d_in):
            xv = x[t, r]
            for col in range(4 * hidden):
                dw[hidden + r, col] += xv * dz[col]
        for r in range(d_in):
            acc = 0.0
            for col in range(4 * hidden):
                acc += dz[col] * wx[r, col]
            dx[t, r] = acc
        for r in range(hidden):
            acc = 0.0
            for col in range(4 * hidden):
                acc += dz[col] * wh[r, col]
            dh_acc[r] = acc
    return dx, dw, db, dh_acc, dc_acc


@njit(cache=True)
def embedding_grad_scatter(grad_out, ids, mask, grad_emb):
    sents, words, dim = grad_out.shape
    for s in range(sents):
        for t in range(words):
            if mask[s, t]:
                row = ids[s, t]
                for d in range(dim):
                    grad_emb[row, d] += grad_out[s, t, d]
