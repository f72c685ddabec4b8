"""Word analyzer and hashed n-gram featurization shared by the encoders, clustering and BM25."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import kernels

_WORD = re.compile(r"[^\W_]+")
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def analyze(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _WORD.findall(text.lower())


def segment_sentences(text: str) -> list[str]:
    parts = (p.strip() for p in _SENTENCE_END.split(text))
    return [p for p in parts if p]


def count_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class FeatureConfig:
    n_buckets: int = 4096
    word_ngrams: tuple[int, ...] = (1, 2)
    char_ngrams: tuple[int, ...] = (3,)
    seed: int = 0x5EED

    def __post_init__(self):
        if self.n_buckets < 64:
            raise ValueError(f"n_buckets must be >= 64, got {self.n_buckets}")
        object.__setattr__(self, "word_ngrams", tuple(self.word_ngrams))
        object.__setattr__(self, "char_ngrams", tuple(self.char_ngrams))


def ngram_strings(text: str, config: FeatureConfig) -> list[str]:
    """Namespaced n-gram strings that get hashed into feature buckets."""
    words = analyze(text)
    grams = []
    for n in config.word_ngrams:
        for i in range(len(words) - n + 1):
            grams.append(f"w{n}:" + " ".join(words[i : i + n]))
    for n in config.char_ngrams:
        for w in words:
            padded = f"#{w}#"
            for i in range(len(padded) - n + 1):
                grams.append(f"c{n}:" + padded[i : i + n])
    return grams


def hash_features(text: str, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    out = np.zeros(config.n_buckets, dtype=np.float64)
    grams = ngram_strings(text, config)
    if grams:
        buckets = kernels.hash_buckets(grams, config.n_buckets, config.seed)
        out += np.bincount(buckets, minlength=config.n_buckets)
        out /= np.sqrt(out @ out)
    return out


def feature_matrix(texts, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    texts = list(texts)
    mat = np.zeros((len(texts), config.n_buckets), dtype=np.float64)
    for i, t in enumerate(texts):
        mat[i] = hash_features(t, config)
    return mat
