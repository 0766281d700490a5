"""The scoring network: hierarchical sentence encoder plus co-attention.

An essay and its source article run through one shared encoder (embedding,
1D convolution over token windows, attention pooling to a sentence vector,
sentence-level LSTM). A similarity matrix between the two sentence
sequences then drives attention in both directions, the fused
representation passes through a second LSTM, and the final hidden state
maps to a score in (0, 1) through a sigmoid.

All layer functions take an optional GradTape and build on the ops in
``tensor``; every intermediate of a full forward pass is retained on a
``ForwardTrace`` so attention weights can be reported afterwards.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .errors import ConfigError, DegenerateInputError, DimensionError, UsageError

_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ModelConfig:
    """Network sizes and switches; the defaults are the trained setting."""

    embed_dim: int = 50
    conv_kernel: int = 5
    conv_filters: int = 100
    lstm_hidden: int = 100
    modeling_hidden: int = 100
    dropout_rate: float = 0.5
    vocab_size: int = 4000
    max_sentences: int = 100
    max_tokens_per_sentence: int = 50
    conv_activation: str = "relu"
    trainable_embeddings: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        for name in (
            "embed_dim",
            "conv_kernel",
            "conv_filters",
            "lstm_hidden",
            "modeling_hidden",
            "vocab_size",
            "max_sentences",
            "max_tokens_per_sentence",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must cover the PAD and UNK ids")
        if self.max_tokens_per_sentence < self.conv_kernel:
            raise ConfigError(
                f"max_tokens_per_sentence {self.max_tokens_per_sentence} is below "
                f"conv_kernel {self.conv_kernel}"
            )
        if self.conv_activation not in _ACTIVATIONS:
            raise ConfigError(f"conv_activation must be one of {_ACTIVATIONS}")
        T.resolve_dtype(self.dtype)

    @property
    def window_count(self):
        return self.max_tokens_per_sentence - self.conv_kernel + 1

    @property
    def fused_dim(self):
        return 4 * self.lstm_hidden


def _parameter_shapes(config):
    """Name → (shape, is_bias) in the fixed creation/serialization order."""
    d_e, d_c = config.embed_dim, config.conv_filters
    d_h, d_m = config.lstm_hidden, config.modeling_hidden
    k = config.conv_kernel
    shapes = {
        "embedding": ((config.vocab_size, d_e), False),
        "conv_w": ((k * d_e, d_c), False),
        "conv_b": ((1, d_c), True),
        "pool_w": ((d_c, d_c), False),
        "pool_b": ((1, d_c), True),
        "pool_v": ((d_c, 1), False),
    }
    for prefix, d_in, d_out in (("sent", d_c, d_h), ("model", 4 * d_h, d_m)):
        for gate in ("forget", "input", "cell", "output"):
            shapes[f"{prefix}_{gate}_w"] = ((d_out + d_in, d_out), False)
        for gate in ("forget", "input", "cell", "output"):
            shapes[f"{prefix}_{gate}_b"] = ((1, d_out), True)
    shapes["sim_w"] = ((3 * d_h, 1), False)
    shapes["sim_b"] = ((1, 1), True)
    shapes["out_w"] = ((d_m, 1), False)
    shapes["out_b"] = ((1, 1), True)
    return shapes


class ModelParams:
    """All trainable tensors of one model, keyed by stable names."""

    def __init__(self, config, arrays):
        self.config = config
        self._tensors = {}
        dtype = T.resolve_dtype(config.dtype)
        for name, (shape, _) in _parameter_shapes(config).items():
            arr = arrays[name]
            if tuple(arr.shape) != shape:
                raise DimensionError(
                    f"parameter {name}: expected shape {shape}, got {tuple(arr.shape)}"
                )
            trainable = config.trainable_embeddings if name == "embedding" else True
            self._tensors[name] = T.Tensor(arr, requires_grad=trainable, dtype=dtype)

    def __getattr__(self, name):
        tensors = object.__getattribute__(self, "_tensors")
        if name in tensors:
            return tensors[name]
        raise AttributeError(name)

    def named(self):
        return list(self._tensors.items())

    def zero_grads(self):
        for t in self._tensors.values():
            t.zero_grad()

    def copy_arrays(self):
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_arrays(self, arrays):
        for name, t in self._tensors.items():
            arr = arrays[name]
            if tuple(arr.shape) != t.data.shape:
                raise DimensionError(
                    f"parameter {name}: expected shape {t.data.shape}, got {tuple(arr.shape)}"
                )
            t.data = np.array(arr, dtype=t.data.dtype)

    def _gates(self, prefix):
        return tuple(
            self._tensors[f"{prefix}_{gate}_{kind}"]
            for kind in ("w", "b")
            for gate in ("forget", "input", "cell", "output")
        )

    def sentence_gates(self):
        return self._gates("sent")

    def modeling_gates(self):
        return self._gates("model")


def init_params(config, rng, embedding=None):
    """Glorot-uniform weights, zero biases, and the given embedding rows.

    Without a pretrained ``embedding`` matrix the rows draw uniform
    [−0.05, 0.05]; the PAD row is zero either way. Draw order is the fixed
    parameter order, so one seed pins every weight.
    """
    arrays = {}
    for name, (shape, is_bias) in _parameter_shapes(config).items():
        if name == "embedding":
            if embedding is not None:
                arr = np.array(embedding, dtype=np.float64)
                if tuple(arr.shape) != shape:
                    raise DimensionError(
                        f"embedding: expected shape {shape}, got {tuple(arr.shape)}"
                    )
            else:
                arr = rng.uniform(-0.05, 0.05, size=shape)
            arr[0] = 0.0
        elif is_bias:
            arr = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            arr = rng.uniform(-limit, limit, size=shape)
        arrays[name] = arr
    return ModelParams(config, arrays)


@dataclass
class ForwardTrace:
    """Every intermediate of one (essay, article) forward pass."""

    essay_embedded: T.Tensor = None
    article_embedded: T.Tensor = None
    essay_conv: T.Tensor = None
    article_conv: T.Tensor = None
    essay_window_attention: T.Tensor = None
    article_window_attention: T.Tensor = None
    essay_pooled: T.Tensor = None
    article_pooled: T.Tensor = None
    essay_hidden: T.Tensor = None
    article_hidden: T.Tensor = None
    similarity: T.Tensor = None
    essay_article_attention: T.Tensor = None
    attended_article: T.Tensor = None
    essay_attention: T.Tensor = None
    attended_essay: T.Tensor = None
    fused: T.Tensor = None
    modeled_hidden: T.Tensor = None
    essay_state: T.Tensor = None
    score: T.Tensor = None

    def named(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


def embed_lookup(doc, table, train_mode=False, dropout_rate=0.0, rng=None, tape=None):
    """Token embeddings for the real sentences of ``doc``, with dropout.

    Output is (real sentences, max tokens, embed dim); padded token slots
    are zero vectors. In train mode an inverted dropout mask scales kept
    activations by 1/keep so evaluation needs no correction.
    """
    n = doc.n_sentences
    out = T.embedding_lookup(table, doc.token_ids[:n], doc.token_mask[:n], tape)
    if train_mode and dropout_rate > 0.0:
        if rng is None:
            raise UsageError("train-mode dropout needs an rng")
        keep = 1.0 - dropout_rate
        mask = (rng.random(out.shape) < keep) / keep
        out = T.mul(out, T.constant(mask.astype(out.data.dtype)), tape)
    return out


def conv_sentence(embedded, conv_w, conv_b, kernel, activation="relu", tape=None):
    """1D convolution over token windows of each sentence, then nonlinearity.

    (S, W, d_e) -> (S, W − kernel + 1, filters); window i spans tokens
    i .. i+kernel−1.
    """
    s, w, d_e = embedded.shape
    count = w - kernel + 1
    windows = T.sliding_windows(embedded, kernel, tape)
    flat = T.reshape(windows, (s * count, kernel * d_e), tape)
    pre = T.add_bias(T.matmul(flat, conv_w, tape), conv_b, tape)
    post = T.relu(pre, tape) if activation == "relu" else T.tanh(pre, tape)
    return T.reshape(post, (s, count, conv_w.shape[1]), tape)


def _attention_pool(conv, window_mask, pool_w, pool_b, pool_v, tape=None):
    s, count, d_c = conv.shape
    if window_mask.shape != (s, count):
        raise DimensionError(
            f"attention_pool: window mask {window_mask.shape} does not fit "
            f"conv output {tuple(conv.shape)}"
        )
    flat = T.reshape(conv, (s * count, d_c), tape)
    keys = T.tanh(T.add_bias(T.matmul(flat, pool_w, tape), pool_b, tape), tape)
    scores = T.reshape(T.matmul(keys, pool_v, tape), (s, count), tape)
    weights = T.softmax_masked(scores, window_mask, tape)
    return T.weighted_window_sum(weights, conv, tape), weights


def attention_pool(conv, window_mask, pool_w, pool_b, pool_v, tape=None):
    """Collapse each sentence's windows into one vector by learned attention.

    Scores come from a tanh projection of each window; masked windows get
    exactly zero weight and the rest sum to 1 per sentence.
    """
    pooled, _ = _attention_pool(conv, window_mask, pool_w, pool_b, pool_v, tape)
    return pooled


def lstm_forward(x, gates, h0=None, c0=None, length=None, tape=None):
    """Run the gated recurrence over sentence vectors; see tensor.lstm_sequence."""
    return T.lstm_sequence(x, gates, h0=h0, c0=c0, length=length, tape=tape)


def similarity_matrix(essay_hidden, article_hidden, sim_w, sim_b, tape=None):
    """Pairwise sentence similarity: w·[he; ha; he∘ha] + b for every pair.

    Expanding the weight vector into its three blocks lets the whole map
    build from matrix products, with the elementwise block computed as
    (He ∘ w3ᵀ) · Haᵀ.
    """
    n_e, d_h = essay_hidden.shape
    n_a = article_hidden.shape[0]
    if article_hidden.shape[1] != d_h or sim_w.shape != (3 * d_h, 1):
        raise DimensionError(
            f"similarity_matrix: hidden widths {tuple(essay_hidden.shape)} / "
            f"{tuple(article_hidden.shape)} do not fit weights {tuple(sim_w.shape)}"
        )
    dtype = essay_hidden.data.dtype
    w_essay = T.slice_rows(sim_w, 0, d_h, tape)
    w_article = T.slice_rows(sim_w, d_h, 2 * d_h, tape)
    w_both = T.slice_rows(sim_w, 2 * d_h, 3 * d_h, tape)
    ones_row = T.constant(np.ones((1, n_a), dtype=dtype))
    ones_col = T.constant(np.ones((n_e, 1), dtype=dtype))
    essay_term = T.matmul(T.matmul(essay_hidden, w_essay, tape), ones_row, tape)
    article_term = T.matmul(
        ones_col, T.transpose(T.matmul(article_hidden, w_article, tape), tape), tape
    )
    scaled_essay = T.mul(essay_hidden, T.matmul(ones_col, T.transpose(w_both, tape), tape), tape)
    pair_term = T.matmul(scaled_essay, T.transpose(article_hidden, tape), tape)
    total = T.add(T.add(essay_term, article_term, tape), pair_term, tape)
    return T.add_scalar(total, sim_b, tape)


def essay_to_article(sim, article_hidden, article_mask, tape=None):
    """Attend from each essay sentence over the article sentences.

    Returns (weights, attended): weights is the row-wise masked softmax of
    the similarity map, attended its product with the article states, one
    article summary per essay sentence.
    """
    article_mask = np.asarray(article_mask, dtype=bool)
    grid = np.broadcast_to(article_mask, sim.shape)
    weights = T.softmax_masked(sim, grid, tape)
    return weights, T.matmul(weights, article_hidden, tape)


def article_to_essay(sim, essay_hidden, essay_mask, article_mask=None, tape=None):
    """Attend over essay sentences by their best article match.

    Each essay sentence's peak similarity (over unmasked article sentences)
    feeds one softmax across the essay; the weighted sum of essay states is
    tiled back to one row per essay sentence. Returns (weights, tiled).
    """
    n_e = sim.shape[0]
    if article_mask is None:
        article_mask = np.ones(sim.shape[1], dtype=bool)
    peaks = T.masked_row_max(sim, article_mask, tape)
    weights = T.softmax_masked(peaks, np.asarray(essay_mask, dtype=bool), tape)
    pooled = T.matmul(T.reshape(weights, (1, n_e), tape), essay_hidden, tape)
    ones_col = T.constant(np.ones((n_e, 1), dtype=sim.data.dtype))
    return weights, T.matmul(ones_col, pooled, tape)


def fuse(essay_hidden, attended_article, attended_essay, tape=None):
    """Join the attention views along the feature axis, in exactly the order
    [essay states; attended article; essay * attended article;
    essay * attended essay].
    """
    if not (essay_hidden.shape == attended_article.shape == attended_essay.shape):
        raise DimensionError(
            f"fuse: shapes {tuple(essay_hidden.shape)}, {tuple(attended_article.shape)}, "
            f"{tuple(attended_essay.shape)} must all agree"
        )
    return T.concat(
        [
            essay_hidden,
            attended_article,
            T.mul(essay_hidden, attended_article, tape),
            T.mul(essay_hidden, attended_essay, tape),
        ],
        axis=1,
        tape=tape,
    )


def _encode_document(doc, params, config, train_mode, rng, tape, trace, side):
    n = doc.n_sentences
    embedded = embed_lookup(
        doc, params.embedding, train_mode, config.dropout_rate, rng, tape
    )
    conv = conv_sentence(
        embedded, params.conv_w, params.conv_b, config.conv_kernel,
        config.conv_activation, tape,
    )
    window_mask = doc.window_mask[:n]
    if window_mask.shape[1] != conv.shape[1]:
        raise DimensionError(
            f"document window mask width {window_mask.shape[1]} does not match "
            f"conv windows {conv.shape[1]}; document encoded with another config"
        )
    pooled, window_attn = _attention_pool(
        conv, window_mask, params.pool_w, params.pool_b, params.pool_v, tape
    )
    hidden = lstm_forward(pooled, params.sentence_gates(), tape=tape)
    setattr(trace, f"{side}_embedded", embedded)
    setattr(trace, f"{side}_conv", conv)
    setattr(trace, f"{side}_window_attention", window_attn)
    setattr(trace, f"{side}_pooled", pooled)
    setattr(trace, f"{side}_hidden", hidden)
    return hidden


def forward_full(essay, article, params, config, train_mode=False, rng=None, tape=None):
    """Score one (essay, article) pair, returning the full ForwardTrace.

    Both documents pass through the same encoder weights (essay first, so
    train-mode dropout draws are reproducible), then co-attention, the
    modeling recurrence, and the sigmoid output head.
    """
    n_e, n_a = essay.n_sentences, article.n_sentences
    if n_e == 0 or n_a == 0:
        raise DegenerateInputError("cannot score an empty essay or article")
    trace = ForwardTrace()
    essay_hidden = _encode_document(
        essay, params, config, train_mode, rng, tape, trace, "essay"
    )
    article_hidden = _encode_document(
        article, params, config, train_mode, rng, tape, trace, "article"
    )
    trace.similarity = similarity_matrix(
        essay_hidden, article_hidden, params.sim_w, params.sim_b, tape
    )
    all_articles = np.ones(n_a, dtype=bool)
    all_essays = np.ones(n_e, dtype=bool)
    trace.essay_article_attention, trace.attended_article = essay_to_article(
        trace.similarity, article_hidden, all_articles, tape
    )
    trace.essay_attention, trace.attended_essay = article_to_essay(
        trace.similarity, essay_hidden, all_essays, all_articles, tape
    )
    trace.fused = fuse(essay_hidden, trace.attended_article, trace.attended_essay, tape)
    trace.modeled_hidden = lstm_forward(trace.fused, params.modeling_gates(), tape=tape)
    trace.essay_state = T.slice_rows(trace.modeled_hidden, n_e - 1, n_e, tape)
    trace.score = T.sigmoid(
        T.add_scalar(T.matmul(trace.essay_state, params.out_w, tape), params.out_b, tape),
        tape,
    )
    return trace
