"""Command-line entry point: train, evaluate, score, and attend.

All settings live in a flat ``key = value`` config file mirrored by
command-line overrides, so a committed config plus a seed reproduces a run
exactly. Exit codes separate failure classes: 0 success, 2 configuration,
3 data, 4 numeric.
"""

import argparse
import os
import sys
from dataclasses import dataclass, fields as dc_fields

from .data import ScoreScale, load_article, load_corpus
from .errors import (
    CheckpointError,
    ConfigError,
    DegenerateInputError,
    EncodingError,
    NumericError,
    ParseError,
    UsageError,
    ValidationError,
)
from .evaluation import attention_report, cross_validate, evaluate_model, write_summary
from .layers import ModelConfig
from .training import load_checkpoint

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

OUT_DIR_ENV = "COATTN_OUT_DIR"


@dataclass
class RunConfig:
    """Everything one training run depends on; defaults are the trained setting."""

    corpus: str = None
    article: str = None
    embeddings: str = None
    out_dir: str = "."
    corpus_format: str = "canonical_tsv"
    prompt_id: str = None
    min_score: int = 0
    max_score: int = 3
    seed: int = 0
    epochs: int = 100
    batch_size: int = 100
    learning_rate: float = 0.001
    momentum: float = 0.9
    rho: float = 0.9
    epsilon: float = 1e-7
    clip: bool = True
    clip_norm: float = 10.0
    n_folds: int = 5
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

    def model_config(self):
        return ModelConfig(
            embed_dim=self.embed_dim,
            conv_kernel=self.conv_kernel,
            conv_filters=self.conv_filters,
            lstm_hidden=self.lstm_hidden,
            modeling_hidden=self.modeling_hidden,
            dropout_rate=self.dropout_rate,
            vocab_size=self.vocab_size,
            max_sentences=self.max_sentences,
            max_tokens_per_sentence=self.max_tokens_per_sentence,
            conv_activation=self.conv_activation,
            trainable_embeddings=self.trainable_embeddings,
            dtype=self.dtype,
        )

    def score_scale(self):
        return ScoreScale(self.min_score, self.max_score)


_FIELD_TYPES = {f.name: f.type for f in dc_fields(RunConfig)}


def _coerce(key, raw):
    kind = _FIELD_TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    try:
        if kind is bool:
            if raw not in ("true", "false"):
                raise ValueError
            return raw == "true"
        return kind(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot read {raw!r} as {kind.__name__}")


def parse_config_file(path):
    """Read 'key = value' lines; blank lines and #-comments are skipped."""
    values = {}
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, raw = line.partition("=")
            if not sep:
                raise ConfigError(f"{path} line {line_no}: expected 'key = value'")
            values[key.strip()] = _coerce(key.strip(), raw)
    return values


def build_run_config(args):
    """Layer defaults, config file, --set pairs, flags, then the env var."""
    values = {}
    if args.config:
        values.update(parse_config_file(args.config))
    for pair in args.set or []:
        key, sep, raw = pair.partition("=")
        if not sep:
            raise ConfigError(f"--set needs KEY=VALUE, got {pair!r}")
        values[key.strip()] = _coerce(key.strip(), raw)
    for key in ("corpus", "article", "embeddings", "out_dir", "min_score",
                "max_score", "seed", "epochs", "batch_size", "n_folds"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    config = RunConfig(**values)
    env_out = os.environ.get(OUT_DIR_ENV)
    if env_out:
        config.out_dir = env_out
    return config


def _require_file(path, what):
    if path is None:
        raise ConfigError(f"no {what} path configured")
    if not os.path.exists(path):
        raise ConfigError(f"{what} file not found: {path}")
    return path


def cmd_train(args):
    run = build_run_config(args)
    _require_file(run.corpus, "corpus")
    _require_file(run.article, "article")
    if run.embeddings is not None:
        _require_file(run.embeddings, "embeddings")
    scale = run.score_scale()
    records = load_corpus(run.corpus, run.corpus_format, scale, run.prompt_id)
    article_text = load_article(run.article)
    os.makedirs(run.out_dir, exist_ok=True)
    report = cross_validate(
        records, article_text, run.model_config(), scale,
        seed=run.seed, epochs=run.epochs, batch_size=run.batch_size,
        learning_rate=run.learning_rate, momentum=run.momentum, rho=run.rho,
        epsilon=run.epsilon, clip_norm=run.clip_norm if run.clip else None,
        n_folds=run.n_folds, embedding_path=run.embeddings, out_dir=run.out_dir,
    )
    write_summary(report, os.path.join(run.out_dir, "summary.tsv"))
    for fold in report.folds:
        print(f"fold {fold.fold_index}\ttest_qwk {fold.test_qwk:.6f}")
    print(f"mean\ttest_qwk {report.mean_qwk:.6f}")
    return EXIT_OK


def _load_model(path):
    _require_file(path, "checkpoint")
    return load_checkpoint(path)


def _read_text(path, what):
    _require_file(path, what)
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def cmd_score(args):
    model = _load_model(args.checkpoint)
    essay = _read_text(args.essay, "essay")
    article = _read_text(args.article, "article")
    print(model.predict_text(essay, article))
    return EXIT_OK


def cmd_attend(args):
    model = _load_model(args.checkpoint)
    essay = _read_text(args.essay, "essay")
    article = _read_text(args.article, "article")
    for row in attention_report(model, essay, article):
        print(f"{row.index}\t{row.sentence}\t{row.weight:.5f}")
    return EXIT_OK


def cmd_evaluate(args):
    model = _load_model(args.checkpoint)
    _require_file(args.corpus, "corpus")
    article = _read_text(args.article, "article")
    records = load_corpus(args.corpus, args.corpus_format, model.scale, args.prompt_id)
    article_doc = model.encode(article)
    value, pairs = evaluate_model(model, records, article_doc)
    print(f"essays\t{len(pairs)}")
    print(f"qwk\t{value:.6f}")
    return EXIT_OK


def _add_train_flags(sub):
    sub.add_argument("--config", help="key = value settings file")
    sub.add_argument("--corpus", help="essay corpus TSV")
    sub.add_argument("--article", help="source article text file")
    sub.add_argument("--embeddings", help="pretrained embedding file")
    sub.add_argument("--out-dir", dest="out_dir", help="output directory")
    sub.add_argument("--min-score", dest="min_score", type=int)
    sub.add_argument("--max-score", dest="max_score", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--n-folds", dest="n_folds", type=int)
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override any config key (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="coattn",
        description="Source-dependent essay scoring with sentence co-attention.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    train = subs.add_parser("train", help="cross-validated training run")
    _add_train_flags(train)
    train.set_defaults(func=cmd_train)

    score = subs.add_parser("score", help="score one essay with a checkpoint")
    score.add_argument("--checkpoint", required=True)
    score.add_argument("--essay", required=True)
    score.add_argument("--article", required=True)
    score.set_defaults(func=cmd_score)

    attend = subs.add_parser("attend", help="per-sentence attention of one essay")
    attend.add_argument("--checkpoint", required=True)
    attend.add_argument("--essay", required=True)
    attend.add_argument("--article", required=True)
    attend.set_defaults(func=cmd_attend)

    evaluate = subs.add_parser("evaluate", help="QWK of a checkpoint on a corpus")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--corpus", required=True)
    evaluate.add_argument("--article", required=True)
    evaluate.add_argument("--corpus-format", dest="corpus_format",
                          default="canonical_tsv")
    evaluate.add_argument("--prompt-id", dest="prompt_id")
    evaluate.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, ValidationError, EncodingError, DegenerateInputError,
            CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"config error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
