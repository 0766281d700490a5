"""Acceptance gate: one test and one printed pass/fail line per criterion."""

import contextlib
import os
import time

import numpy as np
import pytest

from coattn import data as D
from coattn import evaluation as E
from coattn import layers as L
from coattn import tensor as T
from coattn import training as TR

from helpers import make_synth_corpus, random_document, random_params, synth_model, tiny_config
from test_evaluation import pairs_of, qwk_oracle


@contextlib.contextmanager
def criterion(capsys, number, name):
    """Print one terminal-visible PASS/FAIL line for the criterion."""
    verdict = "FAIL"
    try:
        yield
        verdict = "PASS"
    finally:
        with capsys.disabled():
            print(f"\ncriterion {number} ({name}): {verdict}")


class TestAcceptance:
    def test_criterion_1_gradient_fidelity(self, capsys, rng):
        with criterion(capsys, 1, "end-to-end gradient fidelity"):
            config = tiny_config(
                embed_dim=6, conv_filters=6, lstm_hidden=6, modeling_hidden=6,
                vocab_size=40, max_sentences=4, max_tokens_per_sentence=8,
                conv_kernel=3, dropout_rate=0.0, dtype="float64",
            )
            params = random_params(config, seed=7)
            essay = random_document(rng, config, n_sentences=2)
            article = random_document(rng, config, n_sentences=2)
            tensors = [t for _, t in params.named()]
            assert len(tensors) == 26  # every parameter group participates

            def f(tape, *ts):
                return L.forward_full(essay, article, params, config, tape=tape).score

            start = time.monotonic()
            err = T.grad_check(f, tensors, h=1e-4)
            elapsed = time.monotonic() - start
            assert err < 1e-4, f"max relative error {err}"
            assert elapsed < 60.0, f"took {elapsed:.1f}s"

    def test_criterion_2_attention_normalization(self, capsys):
        with criterion(capsys, 2, "attention normalization suite"):
            config = tiny_config(max_sentences=10)
            rng = np.random.default_rng(2)
            params = random_params(config, seed=0)
            for trial in range(500):
                if trial % 100 == 0:
                    params = random_params(config, seed=trial)
                n_e = int(rng.integers(1, 11))
                n_a = int(rng.integers(1, 11))
                essay = random_document(rng, config, n_sentences=n_e)
                article = random_document(rng, config, n_sentences=n_a)
                trace = L.forward_full(essay, article, params, config)
                for side, doc, n in (("essay", essay, n_e), ("article", article, n_a)):
                    weights = getattr(trace, f"{side}_window_attention").data
                    assert np.all(np.abs(weights.sum(axis=1) - 1.0) <= 1e-6)
                    mask = doc.window_mask[:n]
                    assert np.all(weights[~mask] == 0.0)
                rows = trace.essay_article_attention.data
                assert np.all(np.abs(rows.sum(axis=1) - 1.0) <= 1e-6)
                vector = trace.essay_attention.data
                assert abs(vector.sum() - 1.0) <= 1e-6

    def test_criterion_3_qwk_oracle_equivalence(self, capsys):
        with criterion(capsys, 3, "QWK oracle equivalence"):
            assert E.qwk(pairs_of([0, 0, 1, 1], [0, 1, 0, 1]), 0, 1) == 0.0
            assert E.qwk(pairs_of([1, 2, 3], [3, 2, 1]), 1, 3) == -1.0
            rng = np.random.default_rng(3)
            for _ in range(1000):
                r = int(rng.integers(2, 6))
                n = int(rng.integers(1, 51))
                pairs = pairs_of(rng.integers(0, r, n).tolist(),
                                 rng.integers(0, r, n).tolist())
                assert abs(E.qwk(pairs, 0, r - 1) - qwk_oracle(pairs, 0, r - 1)) <= 1e-10

    def run_training(self, shuffle_labels):
        model, records, article = synth_model(seed=0, shuffle_labels=shuffle_labels)
        article_doc = model.encode(article)
        optimizer = TR.RmspropOptimizer(model.params, learning_rate=0.002)
        rng = np.random.default_rng(0)
        best = -1.0
        for _ in range(100):
            TR.train_epoch(model, records, article_doc, batch_size=8,
                           rng=rng, optimizer=optimizer)
            value, _ = E.evaluate_model(model, records, article_doc)
            best = max(best, value)
            if not shuffle_labels and best >= 0.95:
                break
        return best

    def test_criterion_4_learnability(self, capsys):
        with criterion(capsys, 4, "synthetic learnability with shuffled control"):
            start = time.monotonic()
            learned = self.run_training(shuffle_labels=False)
            elapsed = time.monotonic() - start
            assert learned >= 0.95, f"training QWK peaked at {learned}"
            assert elapsed < 300.0, f"took {elapsed:.1f}s"
            control = self.run_training(shuffle_labels=True)
            assert control < 0.5, f"shuffled control reached {control}"

    def test_criterion_5_protocol_fidelity(self, capsys):
        with criterion(capsys, 5, "fold partition and best-epoch restore"):
            even = [D.EssayRecord(f"e{i}", "p", f"text {i}.", 0) for i in range(20)]
            for fold in D.make_folds(even, n_folds=5, seed=0):
                assert len(fold.train_ids) == 12  # exactly 60 / 20 / 20
                assert len(fold.dev_ids) == 4
                assert len(fold.test_ids) == 4

            records, article = make_synth_corpus()
            n = len(records)
            folds = D.make_folds(records, n_folds=5, seed=0)
            assert len(folds) == 5
            test_union = []
            for fold in folds:
                combined = (set(fold.train_ids) | set(fold.dev_ids)
                            | set(fold.test_ids))
                assert combined == set(range(n))
                assert (len(fold.train_ids) + len(fold.dev_ids)
                        + len(fold.test_ids)) == n
                test_union.extend(fold.test_ids)
            assert sorted(test_union) == list(range(n))

            assert TR.select_best_epoch([0.3, 0.5, 0.5]) == 1
            model, records, article = synth_model(seed=3)
            article_doc = model.encode(article)
            report = TR.fit_with_selection(
                model, records[:16], records[16:], article_doc,
                epochs=3, batch_size=8, rng=np.random.default_rng(3),
            )
            dev_values = [s.dev_qwk for s in report.history]
            assert report.best_epoch == TR.select_best_epoch(dev_values)
            assert report.best_dev_qwk == max(dev_values)
            assert TR.dev_qwk(model, records[16:], article_doc) == report.best_dev_qwk

    def test_criterion_6_determinism_and_persistence(self, capsys, tmp_path):
        with criterion(capsys, 6, "seeded determinism and bitwise persistence"):
            records, article = make_synth_corpus()
            config = tiny_config()
            summaries = []
            for name in ("a", "b"):
                out = tmp_path / name
                out.mkdir()
                report = E.cross_validate(
                    records, article, config, D.ScoreScale(0, 3),
                    seed=11, epochs=1, batch_size=8, out_dir=str(out),
                )
                E.write_summary(report, str(out / "summary.tsv"))
                summaries.append(out)
            first, second = summaries
            assert (first / "summary.tsv").read_bytes() == (
                second / "summary.tsv").read_bytes()
            assert (first / "fold0.ckpt").read_bytes() == (
                second / "fold0.ckpt").read_bytes()

            model, records, article = synth_model(seed=12)
            assert model.config.dtype == "float32"
            path = str(tmp_path / "model.ckpt")
            TR.save_checkpoint(model, path)
            loaded = TR.load_checkpoint(path)
            for (name, t), (_, lt) in zip(model.params.named(),
                                          loaded.params.named()):
                assert np.array_equal(t.data, lt.data), name
            article_doc = model.encode(article)
            loaded_article_doc = loaded.encode(article)
            for record in records[:6]:
                original = model.predict_scaled(
                    model.encode(record.raw_text), article_doc)
                restored = loaded.predict_scaled(
                    loaded.encode(record.raw_text), loaded_article_doc)
                assert original == restored

    def test_criterion_7_asap_reproduction(self, capsys):
        summary_path = os.environ.get("COATTN_ASAP_SUMMARY")
        if not summary_path:
            with capsys.disabled():
                print("\ncriterion 7 (ASAP prompt 3 reproduction): SKIPPED "
                      "(hours-scale run; see scripts/reproduce_asap.py, then set "
                      "COATTN_ASAP_SUMMARY to its summary.tsv)")
            pytest.skip("ASAP reproduction is a documented script, not a CI gate")
        with criterion(capsys, 7, "ASAP prompt 3 mean QWK >= 0.60"):
            mean = None
            for line in open(summary_path, encoding="utf-8"):
                parts = line.rstrip("\n").split("\t")
                if parts[0] == "mean":
                    mean = float(parts[2])
            assert mean is not None, f"no mean row in {summary_path}"
            assert mean >= 0.60, f"mean test QWK {mean}"
