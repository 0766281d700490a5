"""Pure NumPy implementations of the hot kernels.

These are the reference semantics: the numba backend must produce the
same results (up to floating-point associativity) for every function here.
Gate blocks inside the packed LSTM weight matrix are ordered
[forget | input | cell | output] along the column axis, and the first
``hidden`` rows of the matrix multiply the previous hidden state while the
remaining rows multiply the step input.
"""

import numpy as np

BACKEND_NAME = "numpy"


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_forward(x, w, b, h0, c0, length):
    """Run a gated recurrence over the rows of ``x``.

    x: (steps, d_in); w: (hidden + d_in, 4*hidden) packed gates; b: (4*hidden,).
    Rows at index >= length receive a copy of the last real hidden state.
    Returns (h, f, i, g, o, c, tc) where g is the candidate cell value and
    tc is tanh of the cell state; everything is (steps, hidden).
    """
    steps, _ = x.shape
    hidden = w.shape[1] // 4
    wh = w[:hidden]
    wx = w[hidden:]
    xproj = x @ wx + b

    h = np.zeros((steps, hidden), dtype=x.dtype)
    f = np.zeros((steps, hidden), dtype=x.dtype)
    i = np.zeros((steps, hidden), dtype=x.dtype)
    g = np.zeros((steps, hidden), dtype=x.dtype)
    o = np.zeros((steps, hidden), dtype=x.dtype)
    c = np.zeros((steps, hidden), dtype=x.dtype)
    tc = np.zeros((steps, hidden), dtype=x.dtype)

    h_prev = h0
    c_prev = c0
    for t in range(length):
        z = h_prev @ wh + xproj[t]
        f[t] = _sigmoid(z[:hidden])
        i[t] = _sigmoid(z[hidden:2 * hidden])
        g[t] = np.tanh(z[2 * hidden:3 * hidden])
        o[t] = _sigmoid(z[3 * hidden:])
        c[t] = f[t] * c_prev + i[t] * g[t]
        tc[t] = np.tanh(c[t])
        h[t] = o[t] * tc[t]
        h_prev = h[t]
        c_prev = c[t]
    for t in range(length, steps):
        h[t] = h[length - 1]
        c[t] = c[length - 1]
    return h, f, i, g, o, c, tc


def lstm_backward(dh_out, x, w, h0, c0, length, h, f, i, g, o, c, tc):
    """Backpropagate through ``lstm_forward``.

    dh_out: (steps, hidden) gradient w.r.t. every output row.
    Returns (dx, dw, db, dh0, dc0) matching the forward argument shapes.
    """
    steps, d_in = x.shape
    hidden = w.shape[1] // 4
    wh = w[:hidden]
    wx = w[hidden:]

    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = np.zeros(4 * hidden, dtype=x.dtype)
    dz = np.zeros(4 * hidden, dtype=x.dtype)

    # Rows past the real length are copies of row length-1.
    dh_acc = dh_out[length:].sum(axis=0) if length < steps else np.zeros(hidden, dtype=x.dtype)
    dc_acc = np.zeros(hidden, dtype=x.dtype)
    for t in range(length - 1, -1, -1):
        dh = dh_out[t] + dh_acc
        do = dh * tc[t]
        dc = dc_acc + dh * o[t] * (1.0 - tc[t] * tc[t])
        c_prev = c[t - 1] if t > 0 else c0
        h_prev = h[t - 1] if t > 0 else h0
        dz[:hidden] = dc * c_prev * f[t] * (1.0 - f[t])
        dz[hidden:2 * hidden] = dc * g[t] * i[t] * (1.0 - i[t])
        dz[2 * hidden:3 * hidden] = dc * i[t] * (1.0 - g[t] * g[t])
        dz[3 * hidden:] = do * o[t] * (1.0 - o[t])
        db += dz
        dw[:hidden] += np.outer(h_prev, dz)
        dw[hidden:] += np.outer(x[t], dz)
        dx[t] = dz @ wx.T
        dh_acc = dz @ wh.T
        dc_acc = dc * f[t]
    return dx, dw, db, dh_acc, dc_acc


def embedding_grad_scatter(grad_out, ids, mask, grad_emb):
    """Accumulate lookup gradients back into the embedding table (in place).

    grad_out: (sents, words, dim); ids/mask: (sents, words); grad_emb: (vocab, dim).
    Masked positions contribute nothing.
    """
    dim = grad_out.shape[-1]
    flat_grad = grad_out.reshape(-1, dim)
    flat_ids = ids.reshape(-1)
    keep = mask.reshape(-1)
    np.add.at(grad_emb, flat_ids[keep], flat_grad[keep])
