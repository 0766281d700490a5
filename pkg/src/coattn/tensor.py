"""Dense tensors with reverse-mode automatic differentiation.

The network needs only a small set of operations, so the engine is an
explicit tape: every differentiable op appends (output, inputs, grad_fn)
to a ``GradTape`` and ``GradTape.backward`` replays the entries in reverse,
summing contributions into each tensor's ``grad``. Passing ``tape=None``
runs any op forward-only, which is how evaluation-mode inference skips
all bookkeeping.

There is no implicit broadcasting: binary ops require identical shapes,
and the few places the model needs a broadcast (bias rows, scalar offsets)
have dedicated ops with explicit backward rules.
"""

import numpy as np

from . import kernels
from .errors import (
    DegenerateInputError,
    DimensionError,
    EncodingError,
    NumericError,
    UsageError,
)

_DTYPES = {"float32": np.float32, "float64": np.float64}


def resolve_dtype(name):
    """Map a dtype name ('float32' / 'float64') to the NumPy type."""
    try:
        return _DTYPES[name]
    except KeyError:
        raise UsageError(f"unsupported dtype {name!r}; use 'float32' or 'float64'")


class Tensor:
    """A dense float array plus optional gradient of the same shape."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        else:
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, shape is {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}{flag})"


def constant(data, dtype=None):
    """A tensor that never tracks gradients (masks, targets, ones rows)."""
    return Tensor(data, requires_grad=False, dtype=dtype)


class GradTape:
    """Ordered record of the differentiable ops of one forward pass."""

    def __init__(self):
        self._entries = []
        self._produced = set()

    def __len__(self):
        return len(self._entries)

    def record(self, out, inputs, grad_fn):
        self._entries.append((out, tuple(inputs), grad_fn))
        self._produced.add(id(out))

    def backward(self, loss):
        """Accumulate d(loss)/d(tensor) into every requires_grad tensor.

        Tensors consumed several times receive the sum of all path
        contributions; repeated backward calls keep accumulating into
        ``grad`` (callers zero grads between optimizer steps).
        """
        if loss.data.size != 1:
            raise UsageError(f"backward needs a scalar loss, shape is {loss.shape}")
        if self._entries and id(loss) not in self._produced:
            raise UsageError("loss tensor was not produced on this tape")

        grads = {id(loss): np.ones_like(loss.data)}
        holders = {id(loss): loss}
        for out, inputs, grad_fn in reversed(self._entries):
            out_grad = grads.get(id(out))
            if out_grad is None:
                continue
            for inp, g in zip(inputs, grad_fn(out_grad)):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                    holders[key] = inp
        for key, t in holders.items():
            if not t.requires_grad:
                continue
            g = grads[key]
            t.grad = g.copy() if t.grad is None else t.grad + g


def backward(loss, tape):
    """Free-function alias for ``tape.backward(loss)``."""
    tape.backward(loss)


def _maybe_record(tape, out, inputs, grad_fn):
    out.requires_grad = any(t.requires_grad for t in inputs)
    if tape is not None and out.requires_grad:
        tape.record(out, inputs, grad_fn)
    return out


def _check_same_shape(a, b, op):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")


# ---------------------------------------------------------------------------
# core ops


def matmul(a, b, tape=None):
    """Matrix product of two rank-2 tensors."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul needs rank-2 tensors, got {tuple(a.shape)} and {tuple(b.shape)}"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions disagree, {tuple(a.shape)} x {tuple(b.shape)}"
        )
    out = Tensor(a.data @ b.data)

    def grad_fn(dout):
        return dout @ b.data.T, a.data.T @ dout

    return _maybe_record(tape, out, (a, b), grad_fn)


def add(a, b, tape=None):
    if isinstance(b, (int, float)):
        out = Tensor(a.data + b)
        return _maybe_record(tape, out, (a,), lambda dout: (dout,))
    _check_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    return _maybe_record(tape, out, (a, b), lambda dout: (dout, dout))


def sub(a, b, tape=None):
    if isinstance(b, (int, float)):
        out = Tensor(a.data - b)
        return _maybe_record(tape, out, (a,), lambda dout: (dout,))
    _check_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    return _maybe_record(tape, out, (a, b), lambda dout: (dout, -dout))


def mul(a, b, tape=None):
    if isinstance(b, (int, float)):
        return scale(a, b, tape)
    _check_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    return _maybe_record(tape, out, (a, b), lambda dout: (dout * b.data, dout * a.data))


def scale(a, factor, tape=None):
    factor = float(factor)
    out = Tensor(a.data * factor)
    return _maybe_record(tape, out, (a,), lambda dout: (dout * factor,))


def tanh(a, tape=None):
    y = np.tanh(a.data)
    out = Tensor(y)
    return _maybe_record(tape, out, (a,), lambda dout: (dout * (1.0 - y * y),))


def sigmoid(a, tape=None):
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    y[~pos] = ez / (1.0 + ez)
    out = Tensor(y)
    return _maybe_record(tape, out, (a,), lambda dout: (dout * y * (1.0 - y),))


def relu(a, tape=None):
    keep = a.data > 0
    out = Tensor(a.data * keep)
    return _maybe_record(tape, out, (a,), lambda dout: (dout * keep,))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "scale": scale,
}

_UNARY_KINDS = {"tanh", "sigmoid"}


def elementwise(kind, a, b=None, tape=None):
    """Dispatch an elementwise op by name; unknown kinds are usage errors."""
    fn = _ELEMENTWISE.get(kind)
    if fn is None:
        raise UsageError(f"unknown elementwise kind {kind!r}")
    if kind in _UNARY_KINDS:
        if b is not None:
            raise UsageError(f"elementwise {kind!r} takes no second operand")
        return fn(a, tape)
    if b is None:
        raise UsageError(f"elementwise {kind!r} needs a second operand")
    return fn(a, b, tape)


def softmax_masked(logits, mask, tape=None):
    """Exp-normalize over the last axis, restricted to unmasked entries.

    Masked positions are exactly 0 in the output; every row must keep at
    least one unmasked entry. Max-subtraction keeps the exponentials finite
    for any finite logits.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise DimensionError(
            f"softmax_masked: mask shape {mask.shape} != logits shape {tuple(logits.shape)}"
        )
    if not mask.any(axis=-1).all():
        raise DegenerateInputError("softmax_masked: a row is fully masked")
    x = logits.data
    rowmax = np.max(np.where(mask, x, -np.inf), axis=-1, keepdims=True)
    e = np.exp(np.where(mask, x - rowmax, -np.inf))
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def grad_fn(dout):
        inner = (dout * y).sum(axis=-1, keepdims=True)
        return (y * (dout - inner),)

    return _maybe_record(tape, out, (logits,), grad_fn)


def concat(tensors, axis, tape=None):
    """Concatenate along ``axis``; backward splits the gradient back."""
    tensors = list(tensors)
    if not tensors:
        raise UsageError("concat needs at least one tensor")
    first = tensors[0].shape
    for t in tensors[1:]:
        ok = len(t.shape) == len(first) and all(
            t.shape[d] == first[d] for d in range(len(first)) if d != axis
        )
        if not ok:
            raise DimensionError(
                f"concat: shape {tuple(t.shape)} incompatible with {tuple(first)} on axis {axis}"
            )
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def grad_fn(dout):
        return tuple(np.split(dout, bounds, axis=axis))

    return _maybe_record(tape, out, tuple(tensors), grad_fn)


def transpose(a, tape=None):
    if a.data.ndim != 2:
        raise DimensionError(f"transpose needs a rank-2 tensor, got {tuple(a.shape)}")
    out = Tensor(a.data.T.copy())
    return _maybe_record(tape, out, (a,), lambda dout: (dout.T,))


def reshape(a, shape, tape=None):
    shape = tuple(shape)
    if int(np.prod(shape)) != a.data.size:
        raise DimensionError(f"reshape: cannot view {tuple(a.shape)} as {shape}")
    old = a.data.shape
    out = Tensor(a.data.reshape(shape))
    return _maybe_record(tape, out, (a,), lambda dout: (dout.reshape(old),))


def slice_rows(a, start, stop, tape=None):
    """Contiguous slice along the first axis."""
    if not (0 <= start < stop <= a.shape[0]):
        raise DimensionError(f"slice_rows: [{start}:{stop}] out of range for {tuple(a.shape)}")
    out = Tensor(a.data[start:stop].copy())

    def grad_fn(dout):
        g = np.zeros_like(a.data)
        g[start:stop] = dout
        return (g,)

    return _maybe_record(tape, out, (a,), grad_fn)


def sum_all(a, tape=None):
    """Sum of all elements as a (1, 1) tensor."""
    out = Tensor(a.data.sum().reshape(1, 1))
    return _maybe_record(tape, out, (a,), lambda dout: (np.full_like(a.data, dout[0, 0]),))


def add_bias(x, bias, tape=None):
    """Add a (1, d) bias row to every row of a (n, d) tensor."""
    if x.data.ndim != 2 or bias.shape != (1, x.shape[1]):
        raise DimensionError(
            f"add_bias: bias {tuple(bias.shape)} does not fit rows of {tuple(x.shape)}"
        )
    out = Tensor(x.data + bias.data)
    return _maybe_record(
        tape, out, (x, bias), lambda dout: (dout, dout.sum(axis=0, keepdims=True))
    )


def add_scalar(x, s, tape=None):
    """Add a (1, 1) scalar tensor to every element."""
    if s.data.size != 1:
        raise DimensionError(f"add_scalar: offset must be a single element, got {tuple(s.shape)}")
    out = Tensor(x.data + s.data.reshape(()))
    return _maybe_record(
        tape, out, (x, s), lambda dout: (dout, dout.sum().reshape(s.data.shape))
    )


# ---------------------------------------------------------------------------
# ops the document encoder needs


def embedding_lookup(table, ids, mask, tape=None):
    """Gather rows of the embedding table for a (sents, words) id grid.

    Masked (padded) positions come out as zero vectors and receive no
    gradient, so the padding row of the table never drifts during training.
    """
    ids = np.asarray(ids)
    mask = np.asarray(mask, dtype=bool)
    if ids.shape != mask.shape:
        raise DimensionError(f"embedding_lookup: ids {ids.shape} vs mask {mask.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise EncodingError(
            f"token id outside table of {table.shape[0]} rows (min {ids.min()}, max {ids.max()})"
        )
    out = Tensor(table.data[ids] * mask[..., None])

    def grad_fn(dout):
        g = np.zeros_like(table.data)
        kernels.embedding_grad_scatter(np.ascontiguousarray(dout), ids, mask, g)
        return (g,)

    return _maybe_record(tape, out, (table,), grad_fn)


def sliding_windows(x, width, tape=None):
    """All contiguous length-``width`` token windows of every sentence.

    (sents, words, dim) -> (sents, words - width + 1, width * dim); window w
    is the flattened concatenation of tokens w .. w+width-1.
    """
    if x.data.ndim != 3:
        raise DimensionError(f"sliding_windows needs rank 3, got {tuple(x.shape)}")
    sents, words, dim = x.shape
    if words < width:
        raise DimensionError(f"sliding_windows: width {width} exceeds {words} tokens")
    count = words - width + 1
    out = Tensor(
        np.concatenate([x.data[:, off:off + count, :] for off in range(width)], axis=2)
    )

    def grad_fn(dout):
        g = np.zeros_like(x.data)
        for off in range(width):
            g[:, off:off + count, :] += dout[:, :, off * dim:(off + 1) * dim]
        return (g,)

    return _maybe_record(tape, out, (x,), grad_fn)


def weighted_window_sum(weights, values, tape=None):
    """Per-sentence convex combination: (s, p) x (s, p, d) -> (s, d)."""
    if weights.shape != values.shape[:2]:
        raise DimensionError(
            f"weighted_window_sum: weights {tuple(weights.shape)} vs values {tuple(values.shape)}"
        )
    out = Tensor(np.einsum("sp,spd->sd", weights.data, values.data))

    def grad_fn(dout):
        dw = np.einsum("sd,spd->sp", dout, values.data)
        dv = np.einsum("sp,sd->spd", weights.data, dout)
        return dw, dv

    return _maybe_record(tape, out, (weights, values), grad_fn)


def masked_row_max(x, col_mask, tape=None):
    """Per-row maximum over unmasked columns; (m, n) -> (m,).

    The gradient flows to the first attaining column of each row.
    """
    col_mask = np.asarray(col_mask, dtype=bool)
    if x.data.ndim != 2 or col_mask.shape != (x.shape[1],):
        raise DimensionError(
            f"masked_row_max: mask {col_mask.shape} does not fit columns of {tuple(x.shape)}"
        )
    if not col_mask.any():
        raise DegenerateInputError("masked_row_max: every column is masked")
    hidden = np.where(col_mask, x.data, -np.inf)
    arg = hidden.argmax(axis=1)
    out = Tensor(x.data[np.arange(x.shape[0]), arg])

    def grad_fn(dout):
        g = np.zeros_like(x.data)
        g[np.arange(x.shape[0]), arg] = dout
        return (g,)

    return _maybe_record(tape, out, (x,), grad_fn)


def lstm_sequence(x, gates, h0=None, c0=None, length=None, tape=None):
    """Gated recurrence over the rows of ``x`` via the selected kernel backend.

    ``gates`` is an 8-tuple (w_forget, w_input, w_cell, w_output, b_forget,
    b_input, b_cell, b_output); each weight is (hidden + d_in, hidden) with
    the recurrent rows on top, each bias (1, hidden). Rows at index >=
    ``length`` replay the last real hidden state. Returns the (steps, hidden)
    hidden-state sequence.
    """
    wf, wi, wc, wo, bf, bi, bc, bo = gates
    steps, d_in = x.shape
    hidden = wf.shape[1]
    if wf.shape[0] != hidden + d_in:
        raise DimensionError(
            f"lstm_sequence: weight rows {wf.shape[0]} != hidden+input {hidden + d_in}"
        )
    if length is None:
        length = steps
    if not 1 <= length <= steps:
        raise DimensionError(f"lstm_sequence: length {length} out of range for {steps} rows")

    dtype = x.dtype
    w = np.ascontiguousarray(
        np.concatenate([wf.data, wi.data, wc.data, wo.data], axis=1), dtype=dtype
    )
    b = np.ascontiguousarray(
        np.concatenate([bf.data, bi.data, bc.data, bo.data], axis=1).reshape(-1), dtype=dtype
    )
    h0_arr = np.zeros(hidden, dtype=dtype) if h0 is None else np.ascontiguousarray(
        h0.data.reshape(-1), dtype=dtype
    )
    c0_arr = np.zeros(hidden, dtype=dtype) if c0 is None else np.ascontiguousarray(
        c0.data.reshape(-1), dtype=dtype
    )
    xd = np.ascontiguousarray(x.data)
    h, f, i, g, o, c, tc = kernels.lstm_forward(xd, w, b, h0_arr, c0_arr, length)
    out = Tensor(h)

    inputs = [x, wf, wi, wc, wo, bf, bi, bc, bo]
    if h0 is not None:
        inputs.append(h0)
    if c0 is not None:
        inputs.append(c0)

    def grad_fn(dout):
        dx, dw, db, dh0, dc0 = kernels.lstm_backward(
            np.ascontiguousarray(dout), xd, w, h0_arr, c0_arr, length, h, f, i, g, o, c, tc
        )
        wgrads = tuple(dw[:, k * hidden:(k + 1) * hidden].copy() for k in range(4))
        bgrads = tuple(db[k * hidden:(k + 1) * hidden].reshape(1, hidden).copy() for k in range(4))
        grads = [dx, *wgrads, *bgrads]
        if h0 is not None:
            grads.append(dh0.reshape(h0.data.shape))
        if c0 is not None:
            grads.append(dc0.reshape(c0.data.shape))
        return tuple(grads)

    return _maybe_record(tape, out, tuple(inputs), grad_fn)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f, inputs, h=1e-5):
    """Compare tape gradients of ``f`` against central finite differences.

    ``f`` takes (tape, *inputs) and returns a tensor; non-scalar outputs are
    summed. All inputs must be float64 and ``f`` deterministic. Returns the
    max over every input element of |analytic - numeric| / max(|analytic|,
    |numeric|, 1e-8).
    """
    inputs = list(inputs)
    for t in inputs:
        if t.data.dtype != np.float64:
            raise UsageError("grad_check requires float64 inputs")

    def run(tape):
        out = f(tape, *inputs)
        if not np.isfinite(out.data).all():
            raise NumericError("grad_check: non-finite forward output")
        if out.data.size != 1:
            out = sum_all(out, tape)
        return out

    tape = GradTape()
    loss = run(tape)
    for t in inputs:
        t.zero_grad()
    tape.backward(loss)
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]
    for t in inputs:
        t.zero_grad()

    worst = 0.0
    for t, ana in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        ana_flat = ana.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = run(None).item()
            flat[idx] = orig - h
            down = run(None).item()
            flat[idx] = orig
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(ana_flat[idx]), abs(numeric), 1e-8)
            worst = max(worst, abs(ana_flat[idx] - numeric) / denom)
    return worst
