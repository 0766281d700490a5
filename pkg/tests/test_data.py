"""Corpus parsing, tokenization, vocabulary, encoding, scaling, and folds."""

import numpy as np
import pytest

from coattn import data as D
from coattn.errors import (
    DegenerateInputError,
    NumericError,
    ParseError,
    ValidationError,
)

from helpers import tiny_config


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def small_config(**overrides):
    base = dict(max_sentences=4, max_tokens_per_sentence=5, conv_kernel=3)
    base.update(overrides)
    return tiny_config(**base)


class TestCanonicalCorpus:
    def test_single_row(self, tmp_path):
        path = write(
            tmp_path / "c.tsv",
            "essay_id\tprompt_id\tscore\ttext\n"
            "e1\trta\t2\tLife in Kenya is hard.\n",
        )
        records = D.load_corpus(path)
        assert len(records) == 1
        assert records[0] == D.EssayRecord("e1", "rta", "Life in Kenya is hard.", 2)

    def test_text_may_contain_tabs(self, tmp_path):
        path = write(
            tmp_path / "c.tsv",
            "essay_id\tprompt_id\tscore\ttext\ne1\tp\t1\ta\tb\tc\n",
        )
        assert D.load_corpus(path)[0].raw_text == "a\tb\tc"

    def test_blank_lines_skipped(self, tmp_path):
        path = write(
            tmp_path / "c.tsv",
            "essay_id\tprompt_id\tscore\ttext\n\ne1\tp\t1\tx.\n\n",
        )
        assert len(D.load_corpus(path)) == 1

    def test_bad_header(self, tmp_path):
        path = write(tmp_path / "c.tsv", "id\tscore\ttext\ne1\t1\tx.\n")
        with pytest.raises(ParseError, match="line 1"):
            D.load_corpus(path)

    def test_missing_column(self, tmp_path):
        path = write(
            tmp_path / "c.tsv", "essay_id\tprompt_id\tscore\ttext\ne1\t1\tx.\n"
        )
        with pytest.raises(ParseError, match="line 2"):
            D.load_corpus(path)

    def test_non_integer_score(self, tmp_path):
        path = write(
            tmp_path / "c.tsv",
            "essay_id\tprompt_id\tscore\ttext\ne1\tp\thigh\tx.\n",
        )
        with pytest.raises(ParseError, match="line 2.*'high'"):
            D.load_corpus(path)

    def test_score_out_of_range(self, tmp_path):
        path = write(
            tmp_path / "c.tsv",
            "essay_id\tprompt_id\tscore\ttext\ne1\tp\t2\tx.\ne2\tp\t9\ty.\n",
        )
        with pytest.raises(ValidationError, match="line 3.*9"):
            D.load_corpus(path, scale=D.ScoreScale(0, 3))

    def test_unknown_format(self, tmp_path):
        path = write(tmp_path / "c.tsv", "essay_id\tprompt_id\tscore\ttext\n")
        with pytest.raises(ValidationError, match="jsonl"):
            D.load_corpus(path, fmt="jsonl")


ASAP_HEADER = "essay_id\tessay_set\tessay\tdomain1_score\trater1\n"


class TestAsapCorpus:
    def test_prompt_filter(self, tmp_path):
        body = (
            "10\t3\tThe cyclist rode on.\t2\tx\n"
            "11\t1\tDear local newspaper.\t8\tx\n"
            "12\t3\tShe packed water.\t1\tx\n"
        )
        path = write(tmp_path / "a.tsv", ASAP_HEADER + body)
        records = D.load_corpus(path, fmt="asap_tsv", prompt_id=3)
        assert [r.essay_id for r in records] == ["10", "12"]
        assert all(r.prompt_id == "3" for r in records)
        assert records[0].gold_score == 2

    def test_latin1_fallback(self, tmp_path):
        path = tmp_path / "a.tsv"
        path.write_bytes(
            ASAP_HEADER.encode() + b"10\t3\tThe caf\xe9 was dry.\t3\tx\n"
        )
        records = D.load_corpus(str(path), fmt="asap_tsv", prompt_id=3)
        assert records[0].raw_text == "The caf\xe9 was dry."

    def test_empty_score_skipped(self, tmp_path):
        body = "10\t3\tA dry trail.\t\tx\n11\t3\tWater ran out.\t2\tx\n"
        path = write(tmp_path / "a.tsv", ASAP_HEADER + body)
        records = D.load_corpus(path, fmt="asap_tsv", prompt_id=3)
        assert [r.essay_id for r in records] == ["11"]

    def test_missing_required_column(self, tmp_path):
        path = write(tmp_path / "a.tsv", "essay_id\tessay\n10\tx.\n")
        with pytest.raises(ParseError, match="line 1"):
            D.load_corpus(path, fmt="asap_tsv")

    def test_short_row(self, tmp_path):
        path = write(tmp_path / "a.tsv", ASAP_HEADER + "10\t3\n")
        with pytest.raises(ParseError, match="line 2"):
            D.load_corpus(path, fmt="asap_tsv")

    def test_scale_applies(self, tmp_path):
        path = write(tmp_path / "a.tsv", ASAP_HEADER + "10\t3\tx.\t8\tx\n")
        with pytest.raises(ValidationError, match="line 2"):
            D.load_corpus(path, fmt="asap_tsv", scale=D.ScoreScale(0, 3), prompt_id=3)


class TestSentenceSplitting:
    def test_single_sentence(self):
        assert D.split_sentences("Life in Kenya is hard.") == [
            "Life in Kenya is hard."
        ]

    def test_terminators_kept(self):
        assert D.split_sentences("A. B!") == ["A.", "B!"]

    def test_question_marks(self):
        assert D.split_sentences("Why? Because.") == ["Why?", "Because."]

    def test_no_terminator_kept_whole(self):
        assert D.split_sentences("no terminator here") == ["no terminator here"]

    def test_empty_text(self):
        assert D.split_sentences("") == []
        assert D.split_sentences("   ") == []

    def test_interior_period_without_space_does_not_split(self):
        assert D.split_sentences("a.b stays") == ["a.b stays"]


class TestTokenize:
    def test_lowercase_and_edge_punctuation(self):
        assert D.tokenize("Water is connected.") == [
            "water",
            "is",
            "connected",
            ".",
        ]

    def test_numbers_collapse(self):
        assert D.tokenize("2008") == [D.NUM_TOKEN]
        assert D.tokenize("3.5 or 1,200") == [D.NUM_TOKEN, "or", D.NUM_TOKEN]

    def test_empty(self):
        assert D.tokenize("") == []

    def test_wrapping_punctuation(self):
        assert D.tokenize('(He said "yes!")') == [
            "(",
            "he",
            "said",
            '"',
            "yes",
            "!",
            '"',
            ")",
        ]

    def test_interior_apostrophe_kept(self):
        assert D.tokenize("don't") == ["don't"]

    def test_alphanumeric_not_collapsed(self):
        assert D.tokenize("b2b") == ["b2b"]


class TestVocabulary:
    def record(self, text):
        return D.EssayRecord("e", "p", text, 0)

    def test_reserved_slots(self):
        vocab = D.build_vocab([self.record("a a b")], "", cap=4)
        assert len(vocab) == 4
        assert vocab.token_for(D.PAD_ID) == D.PAD_TOKEN
        assert vocab.token_for(D.UNK_ID) == D.UNK_TOKEN
        assert vocab.id_for("a") == 2
        assert vocab.id_for("b") == 3

    def test_cap_counts_reserved_tokens(self):
        vocab = D.build_vocab([self.record("a a b b c")], "", cap=4)
        assert len(vocab) == 4
        assert "c" not in vocab

    def test_tie_break_is_lexicographic(self):
        vocab = D.build_vocab([self.record("c b d")], "", cap=4)
        assert vocab.tokens() == ["b", "c"]

    def test_unknown_maps_to_unk(self):
        vocab = D.build_vocab([self.record("a")], "", cap=10)
        assert vocab.id_for("zebra") == D.UNK_ID
        assert "zebra" not in vocab

    def test_article_tokens_included(self):
        vocab = D.build_vocab([self.record("essay words")], "article words", cap=10)
        assert "article" in vocab
        assert vocab.id_for("words") == 2  # count 2 beats count-1 tokens

    def test_deterministic(self):
        records = [self.record("the well ran dry. the clinic was free.")]
        a = D.build_vocab(records, "seeds grew", cap=10)
        b = D.build_vocab(records, "seeds grew", cap=10)
        assert a.tokens() == b.tokens()

    def test_cap_too_small(self):
        with pytest.raises(ValidationError):
            D.build_vocab([self.record("a")], "", cap=1)

    def test_empty_corpus(self):
        with pytest.raises(ValidationError):
            D.build_vocab([], "", cap=10)


class TestEncodeDocument:
    def vocab(self, text):
        return D.build_vocab([D.EssayRecord("e", "p", text, 0)], "", cap=50)

    def test_padding_and_masks(self):
        text = "The well ran."
        vocab = self.vocab(text)
        doc = D.encode_document(text, vocab, small_config())
        assert doc.token_ids.shape == (4, 5)
        assert doc.token_mask.shape == (4, 5)
        assert doc.n_sentences == 1
        ids = [vocab.id_for(t) for t in ["the", "well", "ran", "."]]
        assert doc.token_ids[0].tolist() == ids + [D.PAD_ID]
        assert doc.token_mask[0].tolist() == [True] * 4 + [False]
        assert np.all(doc.token_ids[1:] == D.PAD_ID)
        assert not doc.sentence_mask[1:].any()

    def test_window_mask_full_and_short(self):
        vocab = self.vocab("the well ran dry here. it did.")
        doc = D.encode_document("the well ran dry here. it did.", vocab, small_config())
        # 5 tokens, kernel 3 -> 3 valid windows; short sentence keeps one
        assert doc.window_mask[0].tolist() == [True, True, True]
        assert doc.window_mask[1].tolist() == [True, False, False]

    def test_long_sentence_truncated(self):
        text = "one two three four five six seven."
        doc = D.encode_document(text, self.vocab(text), small_config())
        assert doc.token_mask[0].sum() == 5
        assert doc.tokens[0] == ["one", "two", "three", "four", "five"]

    def test_extra_sentences_truncated(self):
        text = "A one. B two. C three. D four. E five."
        doc = D.encode_document(text, self.vocab(text), small_config())
        assert doc.n_sentences == 4
        assert len(doc.sentences) == 4

    def test_round_trip_through_vocab(self):
        text = "Water is connected. Life gets hard."
        vocab = self.vocab(text)
        doc = D.encode_document(text, vocab, small_config())
        for s in range(doc.n_sentences):
            ids = doc.token_ids[s][doc.token_mask[s]]
            assert [vocab.token_for(int(i)) for i in ids] == doc.tokens[s]

    def test_unknown_tokens_encode_to_unk(self):
        vocab = self.vocab("known words only.")
        doc = D.encode_document("unseen stuff.", vocab, small_config())
        assert doc.token_ids[0, 0] == D.UNK_ID
        assert doc.token_ids[0, 1] == D.UNK_ID

    def test_empty_document_rejected(self):
        vocab = self.vocab("a.")
        with pytest.raises(DegenerateInputError):
            D.encode_document("   ", vocab, small_config())


class TestScoreScaling:
    def test_scale_endpoints_and_interior(self):
        scale = D.ScoreScale(1, 4)
        assert D.scale_score(1, scale) == 0.0
        assert D.scale_score(4, scale) == 1.0
        assert D.scale_score(2, scale) == pytest.approx(1.0 / 3.0)

    def test_unscale_rounds_half_up(self):
        scale = D.ScoreScale(0, 3)
        assert D.unscale_score(0.49, scale) == 1
        assert D.unscale_score(0.5, scale) == 2
        assert D.unscale_score(0.51, scale) == 2

    def test_unscale_clamps(self):
        scale = D.ScoreScale(0, 3)
        assert D.unscale_score(-0.4, scale) == 0
        assert D.unscale_score(1.7, scale) == 3

    def test_scale_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            D.scale_score(9, D.ScoreScale(0, 3))

    def test_unscale_rejects_non_finite(self):
        with pytest.raises(NumericError):
            D.unscale_score(float("nan"), D.ScoreScale(0, 3))
        with pytest.raises(NumericError):
            D.unscale_score(float("inf"), D.ScoreScale(0, 3))

    def test_degenerate_scale_rejected(self):
        with pytest.raises(ValidationError):
            D.ScoreScale(3, 3)

    def test_round_trip_exact_for_all_ranges(self):
        for lo, hi in [(0, 3), (0, 4), (1, 4), (1, 6), (2, 12), (0, 60)]:
            scale = D.ScoreScale(lo, hi)
            for score in range(lo, hi + 1):
                assert D.unscale_score(D.scale_score(score, scale), scale) == score


class TestEmbeddings:
    def test_hits_misses_and_pad(self, tmp_path, rng):
        path = write(
            tmp_path / "vec.txt", "well 0.5 -0.25 0.125\nclinic 1.0 2.0 3.0\n"
        )
        vocab = D.Vocabulary(["well", "dry", "clinic"])
        matrix, coverage = D.load_embeddings(path, vocab, dim=3, rng=rng)
        assert matrix.shape == (5, 3)
        assert matrix.dtype == np.float32
        assert matrix[vocab.id_for("well")].tolist() == [0.5, -0.25, 0.125]
        assert matrix[vocab.id_for("clinic")].tolist() == [1.0, 2.0, 3.0]
        assert np.all(matrix[D.PAD_ID] == 0.0)
        assert np.all(np.abs(matrix[vocab.id_for("dry")]) <= 0.05)
        assert coverage == pytest.approx(2.0 / 3.0)

    def test_empty_file_coverage_zero(self, tmp_path, rng):
        path = write(tmp_path / "vec.txt", "")
        matrix, coverage = D.load_embeddings(path, D.Vocabulary(["a"]), dim=3, rng=rng)
        assert coverage == 0.0
        assert np.all(matrix[D.PAD_ID] == 0.0)

    def test_wrong_width_names_line(self, tmp_path):
        path = write(
            tmp_path / "vec.txt",
            "ok " + " ".join(["0.1"] * 50) + "\nbad " + " ".join(["0.1"] * 49) + "\n",
        )
        with pytest.raises(ParseError, match="line 2.*49"):
            D.read_embedding_file(path, 50)

    def test_non_numeric_value(self, tmp_path):
        path = write(tmp_path / "vec.txt", "tok 0.1 oops 0.3\n")
        with pytest.raises(ParseError, match="line 1"):
            D.read_embedding_file(path, 3)

    def test_deterministic_given_seed(self, tmp_path):
        path = write(tmp_path / "vec.txt", "a 1 2 3\n")
        vocab = D.Vocabulary(["a", "b"])
        m1, _ = D.load_embeddings(path, vocab, dim=3, rng=np.random.default_rng(5))
        m2, _ = D.load_embeddings(path, vocab, dim=3, rng=np.random.default_rng(5))
        assert np.array_equal(m1, m2)


class TestFolds:
    def records(self, n):
        return [D.EssayRecord(f"e{i}", "p", f"text {i}.", 0) for i in range(n)]

    def test_sizes_and_disjointness(self):
        folds = D.make_folds(self.records(10), n_folds=5, seed=0)
        assert len(folds) == 5
        for fold in folds:
            assert len(fold.train_ids) == 6
            assert len(fold.dev_ids) == 2
            assert len(fold.test_ids) == 2
            combined = set(fold.train_ids) | set(fold.dev_ids) | set(fold.test_ids)
            assert combined == set(range(10))
            assert not set(fold.test_ids) & set(fold.dev_ids)
            assert not set(fold.test_ids) & set(fold.train_ids)
            assert not set(fold.dev_ids) & set(fold.train_ids)

    def test_test_sets_partition_corpus(self):
        folds = D.make_folds(self.records(23), n_folds=5, seed=3)
        seen = [i for fold in folds for i in fold.test_ids]
        assert sorted(seen) == list(range(23))

    def test_dev_rotates_after_test(self):
        folds = D.make_folds(self.records(10), n_folds=5, seed=0)
        for i in range(5):
            assert folds[i].dev_ids == folds[(i + 1) % 5].test_ids

    def test_same_seed_identical(self):
        a = D.make_folds(self.records(20), seed=7)
        b = D.make_folds(self.records(20), seed=7)
        assert a == b

    def test_different_seed_differs(self):
        a = D.make_folds(self.records(40), seed=0)
        b = D.make_folds(self.records(40), seed=1)
        assert a != b

    def test_too_few_records(self):
        with pytest.raises(ValidationError):
            D.make_folds(self.records(3), n_folds=5)

    def test_select_records(self):
        records = self.records(6)
        picked = D.select_records(records, (4, 1))
        assert [r.essay_id for r in picked] == ["e4", "e1"]
