"""Loss, optimizer, epoch loop, best-epoch selection, and checkpoints.

A training run is a deterministic function of (data, seed, config): the
shuffle order and every dropout mask draw from one generator handed in by
the caller, and parameter updates happen in a fixed order.
"""

from dataclasses import dataclass, fields as dc_fields

import numpy as np

from . import tensor as T
from .data import ScoreScale, encode_document, scale_score, unscale_score
from .errors import (
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    DimensionError,
    NumericError,
    ValidationError,
)
from .evaluation import RatingPair, qwk
from .layers import ModelConfig, ModelParams, forward_full

_CHECKPOINT_MAGIC = "coattn-checkpoint"
_CHECKPOINT_VERSION = "1"


class ScoringModel:
    """A parameter set bound to its vocabulary, config, and score range."""

    def __init__(self, config, params, vocab, scale):
        self.config = config
        self.params = params
        self.vocab = vocab
        self.scale = scale
        self._encode_cache = {}

    def encode(self, text):
        return encode_document(text, self.vocab, self.config)

    def encode_record(self, record):
        doc = self._encode_cache.get(record)
        if doc is None:
            doc = self.encode(record.raw_text)
            self._encode_cache[record] = doc
        return doc

    def trace(self, essay_doc, article_doc):
        """Evaluation-mode forward pass (no dropout, no tape)."""
        return forward_full(essay_doc, article_doc, self.params, self.config)

    def predict_scaled(self, essay_doc, article_doc):
        return self.trace(essay_doc, article_doc).score.item()

    def predict_score(self, essay_doc, article_doc):
        return unscale_score(self.predict_scaled(essay_doc, article_doc), self.scale)

    def predict_text(self, essay_text, article_text):
        return self.predict_score(self.encode(essay_text), self.encode(article_text))


def mse_loss(predictions, targets, tape=None):
    """Mean squared error over per-essay scalar predictions.

    ``predictions`` are (1, 1) tensors from the forward pass, ``targets``
    plain floats in [0, 1]; the result is a scalar tensor whose gradient
    w.r.t. prediction i is 2 (y_i − t_i) / N.
    """
    if not predictions:
        raise ValidationError("mse_loss needs at least one prediction")
    if len(predictions) != len(targets):
        raise DimensionError(
            f"mse_loss: {len(predictions)} predictions vs {len(targets)} targets"
        )
    stacked = T.concat(predictions, axis=0, tape=tape)
    gold = T.constant(
        np.asarray(targets, dtype=stacked.data.dtype).reshape(-1, 1)
    )
    diff = T.sub(stacked, gold, tape)
    return T.scale(T.sum_all(T.mul(diff, diff, tape), tape), 1.0 / len(predictions), tape)


class RmspropOptimizer:
    """RMS-scaled steps fed through a classical momentum buffer.

    Per parameter: acc ← ρ·acc + (1−ρ)·g²; step ← lr·g/√(acc+ε);
    buf ← momentum·buf + step; θ ← θ − buf. When ``clip_norm`` is set, the
    gradients are first jointly rescaled so their global norm is at most
    that value.
    """

    def __init__(self, params, learning_rate=0.001, momentum=0.9, rho=0.9,
                 epsilon=1e-7, clip_norm=10.0):
        self.params = params
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.rho = rho
        self.epsilon = epsilon
        self.clip_norm = clip_norm
        self._acc = {}
        self._buf = {}
        for name, t in params.named():
            if t.requires_grad:
                self._acc[name] = np.zeros_like(t.data)
                self._buf[name] = np.zeros_like(t.data)

    def step(self):
        grads = {}
        for name, t in self.params.named():
            if not t.requires_grad:
                continue
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {name}")
            grads[name] = g
        if self.clip_norm is not None:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if total > self.clip_norm:
                factor = self.clip_norm / total
                grads = {name: g * factor for name, g in grads.items()}
        for name, t in self.params.named():
            if name not in grads:
                continue
            g = grads[name]
            acc, buf = self._acc[name], self._buf[name]
            acc *= self.rho
            acc += (1.0 - self.rho) * g * g
            buf *= self.momentum
            buf += self.learning_rate * g / np.sqrt(acc + self.epsilon)
            t.data = t.data - buf


def train_epoch(model, records, article_doc, batch_size=100, rng=None, optimizer=None):
    """One pass over the training records: shuffle, minibatch, update.

    Each batch runs train-mode forwards on its own tape, takes the batch
    MSE on scaled scores, backpropagates, and applies one optimizer step.
    Returns the record-weighted mean loss. Numeric failures carry the
    batch index.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if optimizer is None:
        optimizer = RmspropOptimizer(model.params)
    order = rng.permutation(len(records))
    total, count = 0.0, 0
    for batch_index, start in enumerate(range(0, len(order), batch_size)):
        batch = [records[i] for i in order[start:start + batch_size]]
        tape = T.GradTape()
        predictions, targets = [], []
        for record in batch:
            trace = forward_full(
                model.encode_record(record), article_doc, model.params,
                model.config, train_mode=True, rng=rng, tape=tape,
            )
            predictions.append(trace.score)
            targets.append(scale_score(record.gold_score, model.scale))
        loss = mse_loss(predictions, targets, tape)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"batch {batch_index}: non-finite loss")
        model.params.zero_grads()
        tape.backward(loss)
        try:
            optimizer.step()
        except NumericError as exc:
            raise NumericError(f"batch {batch_index}: {exc}") from exc
        total += value * len(batch)
        count += len(batch)
    return total / count


def dev_qwk(model, records, article_doc):
    """QWK of rounded eval-mode predictions against gold scores."""
    pairs = [
        RatingPair(record.gold_score,
                   model.predict_score(model.encode_record(record), article_doc))
        for record in records
    ]
    return qwk(pairs, model.scale.min_score, model.scale.max_score)


@dataclass(frozen=True)
class EpochStat:
    train_loss: float
    dev_qwk: float


@dataclass
class TrainReport:
    history: list
    best_epoch: int
    best_dev_qwk: float
    checkpoint_path: str = None


def select_best_epoch(dev_qwks):
    """Index of the maximal dev QWK, earliest on ties."""
    best = 0
    for i, value in enumerate(dev_qwks):
        if value > dev_qwks[best]:
            best = i
    return best


def fit_with_selection(model, train_records, dev_records, article_doc, epochs=100,
                       batch_size=100, learning_rate=0.001, momentum=0.9, rho=0.9,
                       epsilon=1e-7, clip_norm=10.0, rng=None, history=None):
    """Train for ``epochs`` epochs, then restore the best dev-QWK weights.

    After every epoch the dev set is scored in eval mode; the parameters of
    the highest dev QWK (earliest on ties) are snapshotted and put back at
    the end. Passing a ``history`` list keeps the completed epoch stats
    reachable even if a later epoch raises.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if history is None:
        history = []
    optimizer = RmspropOptimizer(
        model.params, learning_rate=learning_rate, momentum=momentum, rho=rho,
        epsilon=epsilon, clip_norm=clip_norm,
    )
    best_epoch, best_value, best_arrays = None, None, None
    for _ in range(epochs):
        loss = train_epoch(model, train_records, article_doc, batch_size, rng, optimizer)
        value = dev_qwk(model, dev_records, article_doc)
        history.append(EpochStat(train_loss=loss, dev_qwk=value))
        if best_value is None or value > best_value:
            best_epoch, best_value = len(history) - 1, value
            best_arrays = model.params.copy_arrays()
    if best_arrays is not None:
        model.params.load_arrays(best_arrays)
    return TrainReport(history=history, best_epoch=best_epoch, best_dev_qwk=best_value)


def write_training_log(history, path):
    """Write one 'epoch<TAB>train_loss<TAB>dev_qwk' line per epoch."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch\ttrain_loss\tdev_qwk\n")
        for epoch, stat in enumerate(history):
            fh.write(f"{epoch}\t{stat.train_loss:.6f}\t{stat.dev_qwk:.6f}\n")


# ---------------------------------------------------------------------------
# checkpoints

_FORMATS = {np.dtype(np.float32): "%.9e", np.dtype(np.float64): "%.17e"}


def _format_config_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_config_value(kind, raw):
    if kind is bool:
        return raw == "true"
    return kind(raw)


def save_checkpoint(model, path):
    """Write a self-describing text checkpoint of ``model``.

    Sections: version line, [config], [scale], [vocab N] with one token
    per line in id order, one [param name rows cols] block per parameter
    with enough digits per value for a bit-exact round trip, then [end].
    """
    params = model.params
    fmt = _FORMATS[np.dtype(T.resolve_dtype(model.config.dtype))]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_CHECKPOINT_MAGIC} {_CHECKPOINT_VERSION}\n")
        fh.write("[config]\n")
        for f in dc_fields(ModelConfig):
            fh.write(f"{f.name} {_format_config_value(getattr(model.config, f.name))}\n")
        fh.write("[scale]\n")
        fh.write(f"min_score {model.scale.min_score}\n")
        fh.write(f"max_score {model.scale.max_score}\n")
        tokens = model.vocab.tokens()
        fh.write(f"[vocab {len(tokens)}]\n")
        for token in tokens:
            fh.write(token + "\n")
        for name, t in params.named():
            rows, cols = t.data.shape
            fh.write(f"[param {name} {rows} {cols}]\n")
            for row in t.data:
                fh.write(" ".join(fmt % v for v in row) + "\n")
        fh.write("[end]\n")


class _LineReader:
    def __init__(self, fh):
        self._fh = fh
        self.line_no = 0

    def next(self, context):
        line = self._fh.readline()
        if not line:
            raise CheckpointTruncatedError(
                f"checkpoint ends early at line {self.line_no + 1} (reading {context})"
            )
        self.line_no += 1
        return line.rstrip("\n")


def load_checkpoint(path):
    """Rebuild a ScoringModel from a checkpoint written by save_checkpoint."""
    from .data import Vocabulary

    with open(path, encoding="utf-8") as fh:
        reader = _LineReader(fh)
        head = reader.next("header").split()
        if len(head) != 2 or head[0] != _CHECKPOINT_MAGIC:
            raise CheckpointVersionError(f"{path} is not a checkpoint file")
        if head[1] != _CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                f"unsupported checkpoint version {head[1]} (expected {_CHECKPOINT_VERSION})"
            )
        if reader.next("config") != "[config]":
            raise CheckpointVersionError("missing [config] section")
        kinds = {f.name: f.type for f in dc_fields(ModelConfig)}
        raw_config = {}
        for name, kind in kinds.items():
            key, _, raw = reader.next("config entry").partition(" ")
            if key != name:
                raise CheckpointVersionError(f"expected config key {name}, found {key}")
            kind = {"int": int, "float": float, "str": str, "bool": bool}.get(kind, kind)
            raw_config[name] = _parse_config_value(kind, raw)
        config = ModelConfig(**raw_config)
        if reader.next("scale") != "[scale]":
            raise CheckpointVersionError("missing [scale] section")
        scale_values = {}
        for name in ("min_score", "max_score"):
            key, _, raw = reader.next("scale entry").partition(" ")
            if key != name:
                raise CheckpointVersionError(f"expected scale key {name}, found {key}")
            scale_values[name] = int(raw)
        scale = ScoreScale(**scale_values)
        header = reader.next("vocab header").split()
        if len(header) != 2 or header[0] != "[vocab":
            raise CheckpointVersionError("missing [vocab] section")
        count = int(header[1].rstrip("]"))
        vocab = Vocabulary([reader.next("vocab token") for _ in range(count)])
        if len(vocab) != config.vocab_size:
            raise CheckpointShapeError(
                f"vocabulary holds {len(vocab)} ids but config declares {config.vocab_size}"
            )
        dtype = T.resolve_dtype(config.dtype)
        arrays = {}
        line = reader.next("parameter header")
        while line != "[end]":
            parts = line.split()
            if len(parts) != 4 or parts[0] != "[param":
                raise CheckpointVersionError(f"malformed section header {line!r}")
            name, rows, cols = parts[1], int(parts[2]), int(parts[3].rstrip("]"))
            block = np.empty((rows, cols), dtype=dtype)
            for r in range(rows):
                values = reader.next(f"parameter {name}").split()
                if len(values) != cols:
                    raise CheckpointShapeError(
                        f"parameter {name} row {r} has {len(values)} values, expected {cols}"
                    )
                block[r] = [dtype(v) for v in values]
            arrays[name] = block
            line = reader.next("parameter header")
    try:
        params = ModelParams(config, arrays)
    except KeyError as exc:
        raise CheckpointTruncatedError(f"checkpoint is missing parameter {exc}")
    except DimensionError as exc:
        raise CheckpointShapeError(str(exc))
    return ScoringModel(config, params, vocab, scale)
