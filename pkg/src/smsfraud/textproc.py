"""Tokenization, stop-word lists and TF-IDF featurization.

Two tokenizer modes are supported. ``raw`` lowercases and splits on
whitespace, keeping punctuation attached to tokens (``*137#`` survives as a
token). ``full`` additionally strips every non-alphanumeric character and
drops tokens that become empty. Either mode removes stop words when a list
is configured.

TF-IDF uses raw term counts, the smoothed idf ``ln((1 + N) / (1 + df)) + 1``
and L2 row normalisation.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .labels import Label


class TextprocError(Exception):
    pass


class EmptyCorpus(TextprocError):
    pass


class AllTextsEmpty(TextprocError):
    pass


class EmptyDataset(TextprocError):
    pass


class TokenizerMode(enum.Enum):
    RAW = "raw"
    FULL = "full"


class StopWordProvenance(enum.Enum):
    ENGLISH_BUILTIN = "english_builtin"
    CORPUS_DERIVED = "corpus_derived"
    UNION = "union"


@dataclass(frozen=True)
class StopWordList:
    words: frozenset
    provenance: StopWordProvenance

    def __post_init__(self):
        object.__setattr__(self, "words", frozenset(w.lower() for w in self.words))

    def __contains__(self, token: str) -> bool:
        return token in self.words

    def __len__(self) -> int:
        return len(self.words)

    def union(self, other: "StopWordList") -> "StopWordList":
        return StopWordList(self.words | other.words, StopWordProvenance.UNION)

    def save(self, path) -> None:
        Path(path).write_text("".join(w + "\n" for w in sorted(self.words)), encoding="utf-8")

    @classmethod
    def load(cls, path, provenance=StopWordProvenance.CORPUS_DERIVED) -> "StopWordList":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(frozenset(w.strip() for w in lines if w.strip()), provenance)


def english_stop_words() -> StopWordList:
    """The fixed English list shipped with the package."""
    text = resources.files("smsfraud").joinpath("data/english_stopwords.txt").read_text(encoding="utf-8")
    return StopWordList(frozenset(text.split()), StopWordProvenance.ENGLISH_BUILTIN)


@dataclass(frozen=True)
class TokenizerConfig:
    mode: TokenizerMode = TokenizerMode.RAW
    lowercase: bool = True
    stop_words: Optional[StopWordList] = None

    def __post_init__(self):
        if not self.lowercase:
            raise ValueError("tokenizer always lowercases")

    def to_dict(self) -> dict:
        sw = None
        if self.stop_words is not None:
            sw = {"provenance": self.stop_words.provenance.value, "words": sorted(self.stop_words.words)}
        return {"mode": self.mode.value, "lowercase": True, "stop_words": sw}

    @classmethod
    def from_dict(cls, data: dict) -> "TokenizerConfig":
        sw = data.get("stop_words")
        stop = None
        if sw is not None:
            stop = StopWordList(frozenset(sw["words"]), StopWordProvenance(sw["provenance"]))
        return cls(TokenizerMode(data.get("mode", "raw")), True, stop)


def tokenize(text: str, cfg: TokenizerConfig = TokenizerConfig()) -> list:
    tokens = text.lower().split()
    if cfg.mode is TokenizerMode.FULL:
        tokens = ["".join(ch for ch in t if ch.isalnum()) for t in tokens]
        tokens = [t for t in tokens if t]
    if cfg.stop_words is not None:
        tokens = [t for t in tokens if t not in cfg.stop_words]
    return tokens


def derive_stop_words(train, cfg: TokenizerConfig = TokenizerConfig(), df_threshold: float = 0.5) -> StopWordList:
    """Tokens frequent in *both* classes of ``train``.

    A token qualifies when, within each class separately, it occurs in at
    least ``df_threshold`` of that class's documents. Class-discriminative
    tokens are therefore never listed.
    """
    if len(train) == 0:
        raise EmptyDataset("cannot derive stop words from an empty dataset")
    if not 0.0 < df_threshold <= 1.0:
        raise ValueError("df_threshold must lie in (0, 1]")
    base = TokenizerConfig(cfg.mode)
    result = None
    for label in (Label.FRAUD, Label.NORMAL):
        docs = [set(tokenize(r.text, base)) for r in train if r.label is label]
        if not docs:
            return StopWordList(frozenset(), StopWordProvenance.CORPUS_DERIVED)
        df = {}
        for toks in docs:
            for t in toks:
                df[t] = df.get(t, 0) + 1
        frequent = {t for t, c in df.items() if c >= df_threshold * len(docs)}
        result = frequent if result is None else result & frequent
    return StopWordList(frozenset(result), StopWordProvenance.CORPUS_DERIVED)


class Vocabulary:
    """Token -> dense column index, assigned in first-seen order."""

    def __init__(self, tokens: Sequence[str], document_frequency: Sequence[int]):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.document_frequency = np.asarray(document_frequency, dtype=np.int64)
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token) -> bool:
        return token in self.index

    def df(self, token: str) -> int:
        return int(self.document_frequency[self.index[token]])


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Sparse vector: strictly increasing ``indices`` with matching ``values``."""
    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __eq__(self, other) -> bool:
        return (isinstance(other, FeatureVector) and self.dim == other.dim
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def dot(self, other: "FeatureVector") -> float:
        common, ia, ib = np.intersect1d(self.indices, other.indices, assume_unique=True, return_indices=True)
        return float(np.dot(self.values[ia], other.values[ib]))


@dataclass(frozen=True, eq=False)
class TfidfModel:
    vocabulary: Vocabulary
    idf: np.ndarray
    n_docs: int
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)

    @property
    def dim(self) -> int:
        return len(self.vocabulary)

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.vocabulary.tokens),
            "document_frequency": self.vocabulary.document_frequency.tolist(),
            "idf": self.idf.tolist(),
            "n_docs": self.n_docs,
            "tokenizer": self.tokenizer.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TfidfModel":
        vocab = Vocabulary(data["tokens"], data["document_frequency"])
        idf = np.asarray(data["idf"], dtype=np.float64)
        if idf.shape != (len(vocab),):
            raise ValueError("idf length does not match vocabulary")
        return cls(vocab, idf, int(data["n_docs"]), TokenizerConfig.from_dict(data["tokenizer"]))


def idf_weight(n_docs: int, df: int) -> float:
    return math.log((1 + n_docs) / (1 + df)) + 1.0


def fit_tfidf(train_texts: Sequence[str], cfg: TokenizerConfig = TokenizerConfig()) -> TfidfModel:
    if len(train_texts) == 0:
        raise EmptyCorpus("fit_tfidf needs at least one document")
    tokens = []
    df = []
    index = {}
    any_tokens = False
    for text in train_texts:
        toks = tokenize(text, cfg)
        any_tokens = any_tokens or bool(toks)
        for t in dict.fromkeys(toks):
            j = index.get(t)
            if j is None:
                index[t] = len(tokens)
                tokens.append(t)
                df.append(1)
            else:
                df[j] += 1
    if not any_tokens:
        raise AllTextsEmpty("every training document tokenizes to nothing")
    n = len(train_texts)
    dfa = np.asarray(df, dtype=np.int64)
    idf = np.log((1.0 + n) / (1.0 + dfa)) + 1.0
    return TfidfModel(Vocabulary(tokens, dfa), idf, n, cfg)


def _counts(model: TfidfModel, text: str) -> dict:
    counts = {}
    index = model.vocabulary.index
    for t in tokenize(text, model.tokenizer):
        j = index.get(t)
        if j is not None:
            counts[j] = counts.get(j, 0) + 1
    return counts


def transform(model: TfidfModel, text: str) -> FeatureVector:
    counts = _counts(model, text)
    idx = np.array(sorted(counts), dtype=np.int64)
    vals = np.array([counts[j] for j in idx.tolist()], dtype=np.float64) * model.idf[idx]
    norm = np.sqrt(np.dot(vals, vals))
    if norm > 0:
        vals = vals / norm
    return FeatureVector(idx, vals, model.dim)


def transform_many(model: TfidfModel, texts: Iterable[str]) -> np.ndarray:
    """Dense ``(n_texts, V)`` matrix whose rows equal ``transform(model, text).to_dense()``."""
    texts = list(texts)
    X = np.zeros((len(texts), model.dim))
    for i, text in enumerate(texts):
        fv = transform(model, text)
        X[i, fv.indices] = fv.values
    return X
