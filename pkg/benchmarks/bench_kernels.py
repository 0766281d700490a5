"""Time the hot kernels on both backends at model-scale shapes.

Runs the fused LSTM forward/backward and the embedding gradient scatter
through the pure NumPy implementation and the numba-compiled one, then
prints a table with per-call times and the speedup. Shapes default to the
trained setting (100 sentences, 100 hidden units, 4000-token vocabulary).

Usage:
    python benchmarks/bench_kernels.py [--repeats 50] [--steps 100]
        [--hidden 100] [--d-in 400] [--vocab 4000]
"""

import argparse
import time

import numpy as np

from coattn.kernels import numba_backend, numpy_backend


def time_call(fn, repeats):
    fn()  # warm-up (also triggers JIT compilation)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def lstm_args(rng, steps, d_in, hidden, dtype=np.float32):
    x = rng.uniform(-1, 1, (steps, d_in)).astype(dtype)
    w = rng.uniform(-0.3, 0.3, (hidden + d_in, 4 * hidden)).astype(dtype)
    b = np.zeros(4 * hidden, dtype=dtype)
    h0 = np.zeros(hidden, dtype=dtype)
    c0 = np.zeros(hidden, dtype=dtype)
    return x, w, b, h0, c0


def scatter_args(rng, vocab, sentences=100, words=50, dim=50, dtype=np.float32):
    grad_out = rng.uniform(-1, 1, (sentences, words, dim)).astype(dtype)
    ids = rng.integers(0, vocab, size=(sentences, words))
    mask = rng.random((sentences, words)) < 0.8
    return grad_out, ids, mask


def build_cases(args):
    rng = np.random.default_rng(0)
    x, w, b, h0, c0 = lstm_args(rng, args.steps, args.d_in, args.hidden)
    fwd = numpy_backend.lstm_forward(x, w, b, h0, c0, args.steps)
    dh_out = rng.uniform(-1, 1, fwd[0].shape).astype(np.float32)
    grad_out, ids, mask = scatter_args(rng, args.vocab)

    def lstm_forward(backend):
        return lambda: backend.lstm_forward(x, w, b, h0, c0, args.steps)

    def lstm_backward(backend):
        return lambda: backend.lstm_backward(
            dh_out, x, w, h0, c0, args.steps, *fwd
        )

    def scatter(backend):
        grad_emb = np.zeros((args.vocab, grad_out.shape[-1]), dtype=np.float32)
        return lambda: backend.embedding_grad_scatter(grad_out, ids, mask, grad_emb)

    return [
        (f"lstm_forward  (steps={args.steps}, d_in={args.d_in}, hidden={args.hidden})",
         lstm_forward),
        (f"lstm_backward (steps={args.steps}, d_in={args.d_in}, hidden={args.hidden})",
         lstm_backward),
        (f"embedding_grad_scatter (vocab={args.vocab}, 100x50x50)", scatter),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--steps", type=int, default=100)
    parser.add_argument("--hidden", type=int, default=100)
    parser.add_argument("--d-in", dest="d_in", type=int, default=400)
    parser.add_argument("--vocab", type=int, default=4000)
    args = parser.parse_args()

    rows = []
    for label, make in build_cases(args):
        numpy_time = time_call(make(numpy_backend), args.repeats)
        numba_time = time_call(make(numba_backend), args.repeats)
        rows.append((label, numpy_time, numba_time))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>12}  {'numba':>12}  {'speedup':>8}")
    for label, numpy_time, numba_time in rows:
        print(
            f"{label:<{width}}  {numpy_time * 1e3:>10.3f}ms  "
            f"{numba_time * 1e3:>10.3f}ms  {numpy_time / numba_time:>7.1f}x"
        )


if __name__ == "__main__":
    main()
