"""Agreement metrics, significance tests, cross-validation, and reports."""

import math
import os
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.special import betainc

from .data import build_vocab, load_embeddings, make_folds, select_records
from .errors import CoattnError, ValidationError


class RatingPair(NamedTuple):
    gold: int
    predicted: int


def qwk(pairs, min_score, max_score):
    """Quadratic weighted kappa between gold and predicted integer ratings.

    Builds the normalized confusion matrix O and the chance matrix E (outer
    product of the two marginals), weights cell (i, j) by (i−j)²/(R−1)²,
    and returns 1 − Σ(w∘O)/Σ(w∘E). When the chance term is zero (both
    sides constant and equal) agreement is perfect and the result is 1.
    """
    if not pairs:
        raise ValidationError("qwk needs at least one rating pair")
    r = max_score - min_score + 1
    counts = np.zeros((r, r), dtype=np.int64)
    for gold, predicted in pairs:
        if not (min_score <= gold <= max_score and min_score <= predicted <= max_score):
            raise ValidationError(
                f"rating pair ({gold}, {predicted}) outside [{min_score}, {max_score}]"
            )
        counts[gold - min_score, predicted - min_score] += 1
    # The (R−1)² weight scale and the two matrix normalizations cancel in
    # the ratio, so everything up to the final division stays in exact
    # integer arithmetic.
    expected = np.outer(counts.sum(axis=1), counts.sum(axis=0))
    steps = np.arange(r, dtype=np.int64)
    weights = (steps[:, None] - steps[None, :]) ** 2
    denominator = int((weights * expected).sum())
    if denominator == 0:
        return 1.0
    numerator = len(pairs) * int((weights * counts).sum())
    return float(1.0 - numerator / denominator)


class TTestResult(NamedTuple):
    t: float
    p: float
    degenerate: bool


def paired_t_test(a, b):
    """Two-sided paired t-test on matched score lists.

    Identical lists report (t=0, p=1). Constant nonzero differences have
    zero variance, so the statistic diverges; that is reported as p=0 with
    the ``degenerate`` flag rather than an error, keeping pipelines alive.
    The p-value comes from the regularized incomplete beta form of the
    t distribution CDF.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"paired lists must match, got {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        raise ValidationError(f"paired_t_test needs at least 2 pairs, got {n}")
    diff = a - b
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, False)
        return TTestResult(math.copysign(math.inf, mean), 0.0, True)
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(float(t), p, False)


class AttentionReportRow(NamedTuple):
    index: int
    sentence: str
    weight: float


def attention_report(model, essay_text, article_text):
    """Per-sentence attention of an essay against its article.

    Runs an eval-mode forward pass and pairs each real essay sentence (in
    document order, 1-indexed) with its weight in the essay-side attention
    distribution; the weights sum to 1.
    """
    essay_doc = model.encode(essay_text)
    article_doc = model.encode(article_text)
    trace = model.trace(essay_doc, article_doc)
    weights = np.asarray(trace.essay_attention.data).reshape(-1)
    return [
        AttentionReportRow(i + 1, sentence, float(weight))
        for i, (sentence, weight) in enumerate(zip(essay_doc.sentences, weights))
    ]


def evaluate_model(model, records, article_doc):
    """Score records in eval mode; returns (qwk, rating pairs)."""
    pairs = [
        RatingPair(record.gold_score,
                   model.predict_score(model.encode_record(record), article_doc))
        for record in records
    ]
    return qwk(pairs, model.scale.min_score, model.scale.max_score), pairs


@dataclass
class FoldResult:
    fold_index: int
    test_qwk: float
    best_epoch: int
    best_dev_qwk: float
    history: list
    checkpoint_path: str = None


@dataclass
class CrossValReport:
    folds: list
    mean_qwk: float

    def fold_qwks(self):
        return [f.test_qwk for f in self.folds]


def _default_trainer(settings):
    from .layers import init_params
    from .training import ScoringModel, fit_with_selection

    def trainer(fold_index, config, vocab, train_records, dev_records, article_text, rng):
        embedding = None
        if settings.get("embedding_path"):
            embedding, _ = load_embeddings(
                settings["embedding_path"], vocab, config.embed_dim, rng
            )
        model = ScoringModel(config, init_params(config, rng, embedding),
                             vocab, settings["scale"])
        article_doc = model.encode(article_text)
        report = fit_with_selection(
            model, train_records, dev_records, article_doc,
            epochs=settings["epochs"], batch_size=settings["batch_size"],
            learning_rate=settings["learning_rate"], momentum=settings["momentum"],
            rho=settings["rho"], epsilon=settings["epsilon"],
            clip_norm=settings["clip_norm"], rng=rng,
        )
        return model, report

    return trainer


def cross_validate(records, article_text, config, scale, seed=0, epochs=100,
                   batch_size=100, learning_rate=0.001, momentum=0.9, rho=0.9,
                   epsilon=1e-7, clip_norm=10.0, n_folds=5, embedding_path=None,
                   out_dir=None, trainer=None):
    """Train and test once per fold; report per-fold and mean test QWK.

    Fold i draws its own generator from (seed, i) and builds its vocabulary
    from its training split plus the article only. ``trainer`` may replace
    the default fit (same signature as the default's inner function) for
    stubbing. With ``out_dir`` set, per-fold checkpoints and training logs
    are written there. Errors carry the fold index.
    """
    from .training import save_checkpoint, write_training_log

    if trainer is None:
        trainer = _default_trainer({
            "scale": scale, "epochs": epochs, "batch_size": batch_size,
            "learning_rate": learning_rate, "momentum": momentum, "rho": rho,
            "epsilon": epsilon, "clip_norm": clip_norm,
            "embedding_path": embedding_path,
        })
    folds = make_folds(records, n_folds=n_folds, seed=seed)
    results = []
    for i, fold in enumerate(folds):
        try:
            train_records = select_records(records, fold.train_ids)
            dev_records = select_records(records, fold.dev_ids)
            test_records = select_records(records, fold.test_ids)
            rng = np.random.default_rng([seed, i])
            vocab = build_vocab(train_records, article_text, cap=config.vocab_size)
            fold_config = replace(config, vocab_size=len(vocab))
            model, report = trainer(
                i, fold_config, vocab, train_records, dev_records, article_text, rng
            )
            article_doc = model.encode(article_text)
            test_qwk, _ = evaluate_model(model, test_records, article_doc)
            checkpoint_path = None
            if out_dir is not None:
                checkpoint_path = os.path.join(out_dir, f"fold{i}.ckpt")
                save_checkpoint(model, checkpoint_path)
                if report is not None:
                    write_training_log(report.history, os.path.join(out_dir, f"fold{i}_log.tsv"))
            results.append(FoldResult(
                fold_index=i,
                test_qwk=test_qwk,
                best_epoch=None if report is None else report.best_epoch,
                best_dev_qwk=None if report is None else report.best_dev_qwk,
                history=[] if report is None else report.history,
                checkpoint_path=checkpoint_path,
            ))
        except CoattnError as exc:
            raise type(exc)(f"fold {i}: {exc}") from exc
    mean = float(np.mean([f.test_qwk for f in results]))
    return CrossValReport(folds=results, mean_qwk=mean)


def _fmt(value, pattern="{:.6f}"):
    return "-" if value is None else pattern.format(value)


def write_summary(report, path, baseline=None):
    """Write the machine-readable CV summary as deterministic TSV.

    One row per fold (test QWK, best epoch, best dev QWK), a mean row, and,
    when ``baseline`` per-fold QWKs are given, a paired t-test row against
    them.
    """
    lines = ["section\tfold\ttest_qwk\tbest_epoch\tbest_dev_qwk"]
    for f in report.folds:
        lines.append(
            "fold\t{}\t{}\t{}\t{}".format(
                f.fold_index, _fmt(f.test_qwk),
                _fmt(f.best_epoch, "{}"), _fmt(f.best_dev_qwk),
            )
        )
    lines.append(f"mean\t-\t{report.mean_qwk:.6f}\t-\t-")
    if baseline is not None:
        test = paired_t_test(report.fold_qwks(), baseline)
        lines.append(
            f"ttest_vs_baseline\t-\t{test.t:.6f}\t{test.p:.6f}\t{str(test.degenerate).lower()}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
