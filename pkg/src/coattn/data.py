"""Corpus ingestion, tokenization, vocabularies, score scaling, and folds.

Everything here is a pure function of its inputs plus an explicit seed, so
fold generation and encoding can be replayed bit-for-bit. The canonical
corpus format is a UTF-8 TSV with a header row and columns exactly
``essay_id, prompt_id, score, text``; an adapter reads the public ASAP
release's ``essay_id / essay_set / essay / domain1_score`` columns.
"""

import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, NumericError, ParseError, ValidationError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
NUM_TOKEN = "<num>"
PAD_ID = 0
UNK_ID = 1

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")
_NUMERIC = re.compile(r"[0-9]+(?:[.,][0-9]+)*")


@dataclass(frozen=True)
class EssayRecord:
    essay_id: str
    prompt_id: str
    raw_text: str
    gold_score: int


@dataclass(frozen=True)
class ScoreScale:
    """Inclusive integer score range of one prompt."""

    min_score: int
    max_score: int

    def __post_init__(self):
        if self.max_score <= self.min_score:
            raise ValidationError(
                f"score range needs max > min, got [{self.min_score}, {self.max_score}]"
            )

    @property
    def span(self):
        return self.max_score - self.min_score


@dataclass(frozen=True)
class FoldSplit:
    """One train/dev/test partition; entries are record positions."""

    train_ids: tuple
    dev_ids: tuple
    test_ids: tuple


@dataclass
class EncodedDocument:
    """A document as padded id/mask grids ready for the network.

    ``token_ids`` is (max_sentences, max_tokens) with PAD fill; the masks
    flag real content. ``window_mask`` marks convolution windows that may
    enter attention pooling: windows made entirely of real tokens, except
    that a sentence shorter than the kernel keeps its first window (the
    sentence is conceptually right-padded to kernel length) so every real
    sentence has at least one valid window.
    """

    token_ids: np.ndarray
    token_mask: np.ndarray
    sentence_mask: np.ndarray
    window_mask: np.ndarray
    sentences: list = field(default_factory=list)
    tokens: list = field(default_factory=list)

    @property
    def n_sentences(self):
        return int(self.sentence_mask.sum())


def load_article(path):
    """Read one prompt's source article as plain UTF-8 text."""
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _parse_score(raw, line_no, scale):
    try:
        score = int(raw)
    except ValueError:
        raise ParseError(f"line {line_no}: score {raw!r} is not an integer")
    if scale is not None and not scale.min_score <= score <= scale.max_score:
        raise ValidationError(
            f"line {line_no}: score {score} outside range "
            f"[{scale.min_score}, {scale.max_score}]"
        )
    return score


def _load_canonical(path, scale):
    records = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header.split("\t") != ["essay_id", "prompt_id", "score", "text"]:
            raise ParseError("line 1: expected header essay_id/prompt_id/score/text")
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t", 3)
            if len(parts) != 4:
                raise ParseError(f"line {line_no}: expected 4 tab-separated columns")
            essay_id, prompt_id, raw_score, text = parts
            score = _parse_score(raw_score, line_no, scale)
            records.append(EssayRecord(essay_id, prompt_id, text, score))
    return records


def _read_text_lenient(path):
    # The public ASAP release is not valid UTF-8 throughout.
    raw = open(path, "rb").read()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1")


def _load_asap(path, scale, prompt_id):
    text = _read_text_lenient(path)
    lines = text.splitlines()
    if not lines:
        raise ParseError("line 1: empty file")
    header = lines[0].split("\t")
    try:
        col = {name: header.index(name) for name in
               ("essay_id", "essay_set", "essay", "domain1_score")}
    except ValueError as exc:
        raise ParseError(f"line 1: missing required column ({exc})")
    records = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) <= max(col.values()):
            raise ParseError(f"line {line_no}: expected {len(header)} columns")
        essay_set = parts[col["essay_set"]]
        if prompt_id is not None and essay_set != str(prompt_id):
            continue
        raw_score = parts[col["domain1_score"]]
        if raw_score == "":
            continue
        score = _parse_score(raw_score, line_no, scale)
        records.append(
            EssayRecord(parts[col["essay_id"]], essay_set, parts[col["essay"]], score)
        )
    return records


def load_corpus(path, fmt="canonical_tsv", scale=None, prompt_id=None):
    """Parse an essay corpus; ``fmt`` is 'canonical_tsv' or 'asap_tsv'.

    When ``scale`` is given, every score is range-checked. ``prompt_id``
    filters the ASAP format to one prompt and is ignored otherwise.
    """
    if fmt == "canonical_tsv":
        return _load_canonical(path, scale)
    if fmt == "asap_tsv":
        return _load_asap(path, scale, prompt_id)
    raise ValidationError(f"unknown corpus format {fmt!r}")


def split_sentences(text):
    """Split on '.', '!', '?' followed by whitespace; terminators kept."""
    text = text.strip()
    if not text:
        return []
    return [s for s in _SENTENCE_BOUNDARY.split(text) if s.strip()]


def tokenize(sentence):
    """Lowercase, split on whitespace, peel edge punctuation, collapse digits.

    Each leading or trailing non-alphanumeric character becomes its own
    token; purely numeric cores (digits with optional , or . separators)
    collapse to the NUM token.
    """
    out = []
    for raw in sentence.lower().split():
        lead = []
        while raw and not raw[0].isalnum():
            lead.append(raw[0])
            raw = raw[1:]
        trail = []
        while raw and not raw[-1].isalnum():
            trail.append(raw[-1])
            raw = raw[:-1]
        out.extend(lead)
        if raw:
            out.append(NUM_TOKEN if _NUMERIC.fullmatch(raw) else raw)
        out.extend(reversed(trail))
    return out


class Vocabulary:
    """Dense token→id map with PAD = 0 and UNK = 1 reserved."""

    def __init__(self, tokens):
        """``tokens`` lists the non-reserved entries in id order (from 2)."""
        self._id_to_token = [PAD_TOKEN, UNK_TOKEN, *tokens]
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}
        if len(self._token_to_id) != len(self._id_to_token):
            raise ValidationError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self._id_to_token)

    def __contains__(self, token):
        return token in self._token_to_id

    def id_for(self, token):
        return self._token_to_id.get(token, UNK_ID)

    def token_for(self, idx):
        return self._id_to_token[idx]

    def tokens(self):
        """Non-reserved tokens in id order (the constructor's input)."""
        return list(self._id_to_token[2:])


def _iter_corpus_tokens(records, article_text):
    for record in records:
        for sentence in split_sentences(record.raw_text):
            yield from tokenize(sentence)
    for sentence in split_sentences(article_text):
        yield from tokenize(sentence)


def build_vocab(records, article_text, cap=4000):
    """Keep the (cap − 2) most frequent tokens; ties break lexicographically.

    Built from the training split plus the article only, so dev/test tokens
    can never leak in; the cap counts the PAD/UNK slots.
    """
    if cap < 2:
        raise ValidationError(f"vocabulary cap {cap} cannot hold the reserved tokens")
    counts = Counter(_iter_corpus_tokens(records, article_text))
    if not counts:
        raise ValidationError("cannot build a vocabulary from empty text")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([token for token, _ in ranked[: cap - 2]])


def encode_document(text, vocab, config):
    """Sentence-split, tokenize, and pad ``text`` into an EncodedDocument."""
    sentences = split_sentences(text)[: config.max_sentences]
    sent_tokens = []
    kept_sentences = []
    for sentence, toks in zip(sentences, map(tokenize, sentences)):
        if toks:
            kept_sentences.append(sentence)
            sent_tokens.append(toks[: config.max_tokens_per_sentence])
    if not sent_tokens:
        raise DegenerateInputError("document has no tokens after sentence splitting")

    s_max = config.max_sentences
    w_max = config.max_tokens_per_sentence
    kernel = config.conv_kernel
    p_max = w_max - kernel + 1
    ids = np.full((s_max, w_max), PAD_ID, dtype=np.int32)
    token_mask = np.zeros((s_max, w_max), dtype=bool)
    sentence_mask = np.zeros(s_max, dtype=bool)
    window_mask = np.zeros((s_max, p_max), dtype=bool)
    for s, toks in enumerate(sent_tokens):
        for w, tok in enumerate(toks):
            ids[s, w] = vocab.id_for(tok)
        token_mask[s, : len(toks)] = True
        sentence_mask[s] = True
        window_mask[s, : max(1, len(toks) - kernel + 1)] = True
    return EncodedDocument(
        token_ids=ids,
        token_mask=token_mask,
        sentence_mask=sentence_mask,
        window_mask=window_mask,
        sentences=kept_sentences,
        tokens=sent_tokens,
    )


def scale_score(score, scale):
    """Map an in-range integer score linearly onto [0, 1]."""
    if not scale.min_score <= score <= scale.max_score:
        raise ValidationError(
            f"score {score} outside range [{scale.min_score}, {scale.max_score}]"
        )
    return (score - scale.min_score) / scale.span


def unscale_score(y, scale):
    """Map a [0, 1] prediction back to the nearest integer score.

    Rounds half up and clamps into range, so any finite input yields a
    legal score.
    """
    y = float(y)
    if not np.isfinite(y):
        raise NumericError(f"cannot unscale non-finite prediction {y}")
    stepped = scale.min_score + int(np.floor(y * scale.span + 0.5))
    return min(max(stepped, scale.min_score), scale.max_score)


def read_embedding_file(path, dim):
    """Parse 'token v1 .. v_dim' lines into a token→vector map."""
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ParseError(
                    f"line {line_no}: expected {dim} values, found {len(parts) - 1}"
                )
            try:
                vectors[parts[0]] = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError:
                raise ParseError(f"line {line_no}: non-numeric embedding value")
    return vectors


def load_embeddings(path, vocab, dim=50, rng=None, dtype=np.float32):
    """Build the initial embedding matrix for ``vocab`` from a vector file.

    Tokens present in the file get their stored vectors; misses (UNK
    included) draw uniform [−0.05, 0.05]; the PAD row is forced to zeros.
    Returns (matrix, coverage) where coverage is the hit fraction over
    non-reserved tokens.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    vectors = read_embedding_file(path, dim)
    size = len(vocab)
    matrix = rng.uniform(-0.05, 0.05, size=(size, dim))
    hits = 0
    for idx in range(2, size):
        vec = vectors.get(vocab.token_for(idx))
        if vec is not None:
            matrix[idx] = vec
            hits += 1
    matrix[PAD_ID] = 0.0
    coverage = hits / (size - 2) if size > 2 else 0.0
    return matrix.astype(dtype), coverage


def make_folds(records, n_folds=5, seed=0):
    """Shuffle once, cut into ``n_folds`` chunks, and rotate dev after test.

    Fold i uses chunk i as test and chunk i+1 (mod n) as dev, leaving the
    remaining chunks as train, which yields the 60/20/20 split at n = 5.
    Entries are positions into ``records``.
    """
    n = len(records)
    if n < n_folds:
        raise ValidationError(f"need at least {n_folds} records, have {n}")
    order = np.random.default_rng(seed).permutation(n)
    chunks = [tuple(int(i) for i in chunk) for chunk in np.array_split(order, n_folds)]
    folds = []
    for i in range(n_folds):
        dev = (i + 1) % n_folds
        train = tuple(
            idx for j, chunk in enumerate(chunks) if j not in (i, dev) for idx in chunk
        )
        folds.append(FoldSplit(train_ids=train, dev_ids=chunks[dev], test_ids=chunks[i]))
    return folds


def select_records(records, ids):
    """Materialize a FoldSplit id tuple back into records."""
    return [records[i] for i in ids]
