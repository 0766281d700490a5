"""Shared builders for the test suite: tiny configs, synthetic corpora,
and randomly shaped encoded documents."""

import dataclasses

import numpy as np

from coattn.data import EncodedDocument, EssayRecord, ScoreScale, build_vocab
from coattn.layers import ModelConfig, init_params
from coattn.training import ScoringModel

ARTICLE_SENTENCES = [
    "The village dug a deep well near the square.",
    "A free clinic opened beside the old market.",
    "Farmers planted stronger seeds before the rains.",
    "Solar panels now power the small school.",
    "Families received nets to stop the fever.",
    "Workers laid a gravel road to the river.",
]
FILLER_SENTENCES = [
    "My cousin likes very loud music.",
    "The bus was late again this morning.",
    "We played cards until the evening.",
    "Her dog chased the ball around the yard.",
    "I forgot my umbrella at home.",
    "The film we watched was quite boring.",
]


def tiny_config(**overrides):
    """A config small enough for second-scale tests."""
    base = dict(
        embed_dim=8,
        conv_kernel=3,
        conv_filters=8,
        lstm_hidden=8,
        modeling_hidden=8,
        dropout_rate=0.1,
        vocab_size=200,
        max_sentences=8,
        max_tokens_per_sentence=12,
    )
    base.update(overrides)
    return ModelConfig(**base)


def make_synth_corpus(shuffle_labels=False, seed=0):
    """32 essays of 4 sentences whose score counts copied article sentences.

    8 distinct texts (2 per score 0..3), each repeated 4 times. With
    ``shuffle_labels`` the four copies of every text get the four scores in
    seeded random order instead, so no function of the text alone can beat
    chance agreement; every essay has the same length either way.
    """
    rng = np.random.default_rng(seed)
    texts = []
    for score in range(4):
        for j in range(2):
            evidence = [ARTICLE_SENTENCES[(2 * j + m) % 6] for m in range(score)]
            filler = [FILLER_SENTENCES[(2 * j + score + m) % 6] for m in range(4 - score)]
            sentences = evidence + filler
            order = rng.permutation(len(sentences))
            texts.append((" ".join(sentences[i] for i in order), score))
    records = []
    for t, (text, score) in enumerate(texts):
        labels = list(rng.permutation(4)) if shuffle_labels else [score] * 4
        for c, label in enumerate(labels):
            records.append(EssayRecord(f"t{t}c{c}", "synth", text, int(label)))
    return records, " ".join(ARTICLE_SENTENCES)


def synth_model(config=None, seed=0, shuffle_labels=False):
    """A fresh model bound to the synthetic corpus's vocabulary."""
    records, article = make_synth_corpus(shuffle_labels=shuffle_labels)
    config = config or tiny_config(embed_dim=16, conv_filters=16, lstm_hidden=16,
                                   modeling_hidden=16)
    vocab = build_vocab(records, article, cap=config.vocab_size)
    config = dataclasses.replace(config, vocab_size=len(vocab))
    params = init_params(config, np.random.default_rng(seed))
    model = ScoringModel(config, params, vocab, ScoreScale(0, 3))
    return model, records, article


def random_document(rng, config, n_sentences=None):
    """An EncodedDocument with random real sentence/token counts and ids."""
    s_max = config.max_sentences
    w_max = config.max_tokens_per_sentence
    kernel = config.conv_kernel
    p_max = w_max - kernel + 1
    if n_sentences is None:
        n_sentences = int(rng.integers(1, s_max + 1))
    ids = np.zeros((s_max, w_max), dtype=np.int32)
    token_mask = np.zeros((s_max, w_max), dtype=bool)
    sentence_mask = np.zeros(s_max, dtype=bool)
    window_mask = np.zeros((s_max, p_max), dtype=bool)
    for s in range(n_sentences):
        n_tokens = int(rng.integers(1, w_max + 1))
        ids[s, :n_tokens] = rng.integers(2, config.vocab_size, size=n_tokens)
        token_mask[s, :n_tokens] = True
        sentence_mask[s] = True
        window_mask[s, : max(1, n_tokens - kernel + 1)] = True
    return EncodedDocument(
        token_ids=ids,
        token_mask=token_mask,
        sentence_mask=sentence_mask,
        window_mask=window_mask,
        sentences=[f"sentence {s}" for s in range(n_sentences)],
        tokens=[],
    )


def random_params(config, seed=0):
    return init_params(config, np.random.default_rng(seed))
