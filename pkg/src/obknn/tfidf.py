"""Lexical retriever for the TF-IDF ablation.

Tokens are lowercase alphanumeric runs. Term weights are raw counts times
the smoothed idf ``ln((1 + N) / (1 + df)) + 1``, and each document vector is
L2-normalized. Ranking uses ``1 - cosine`` as the distance, so the output
drops straight into :func:`obknn.inference.knn_distribution`.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .datastore import NeighborSet
from .errors import DegenerateQueryError


def tokenize(text: str) -> list[str]:
    # Unicode letters count as alphanumeric; only separators split.
    return [t for t in re.split(r"[\W_]+", text.lower()) if t]


@dataclass(frozen=True)
class SparseVec:
    terms: np.ndarray    # sorted term ids
    weights: np.ndarray  # float64, same length


class TfIdfIndex:
    """Fitted TF-IDF index over a labelled corpus. Immutable once built."""

    def __init__(self, vocabulary: dict[str, int], idf: np.ndarray, docs: list[SparseVec], labels: np.ndarray):
        self.vocabulary = vocabulary
        self.idf = idf
        self.docs = docs
        self.labels = labels
        postings: dict[int, list[int]] = {}
        for d, vec in enumerate(docs):
            for t in vec.terms.tolist():
                postings.setdefault(t, []).append(d)
        self._postings = postings

    def __len__(self) -> int:
        return len(self.docs)

    @classmethod
    def fit(cls, corpus: Iterable[tuple[str, int]]) -> TfIdfIndex:
        items = list(corpus)
        if not items:
            raise ValueError("cannot fit TF-IDF on an empty corpus")
        counts = [Counter(tokenize(text)) for text, _ in items]
        vocabulary: dict[str, int] = {}
        for c in counts:
            for tok in c:
                vocabulary.setdefault(tok, len(vocabulary))
        df = np.zeros(len(vocabulary), dtype=np.float64)
        for c in counts:
            for tok in c:
                df[vocabulary[tok]] += 1
        n = len(items)
        idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
        docs = [_normalize(_weigh(c, vocabulary, idf)) for c in counts]
        labels = np.array([int(lab) for _, lab in items], dtype=np.int64)
        return cls(vocabulary, idf, docs, labels)

    def vectorize(self, text: str) -> SparseVec:
        """Normalized query vector; out-of-vocabulary tokens are dropped."""
        return _normalize(_weigh(Counter(tokenize(text)), self.vocabulary, self.idf))

    def rank(self, query_text: str, k: int) -> NeighborSet:
        """Top ``min(k, N)`` documents by ascending ``1 - cosine``, ties by corpus order."""
        if k < 1:
            raise ValueError(f"k must be a positive integer, got {k!r}")
        q = self.vectorize(query_text)
        if q.terms.size == 0:
            raise DegenerateQueryError("query shares no vocabulary with the TF-IDF index")
        cand = sorted({d for t in q.terms.tolist() for d in self._postings.get(t, ())})
        dist = np.ones(len(self.docs), dtype=np.float64)
        for d in cand:
            dist[d] = 1.0 - cosine(q, self.docs[d])
        np.clip(dist, 0.0, 1.0, out=dist)
        order = np.lexsort((np.arange(dist.shape[0]), dist))[: min(k, dist.shape[0])]
        return NeighborSet(order.astype(np.int64), self.labels[order].copy(), dist[order])


def cosine(a: SparseVec, b: SparseVec) -> float:
    common, ia, ib = np.intersect1d(a.terms, b.terms, assume_unique=True, return_indices=True)
    if common.size == 0:
        return 0.0
    dot = float(np.sum(a.weights[ia] * b.weights[ib]))
    # Dividing by the recomputed norms makes identical vectors score exactly 1.
    denom = math.sqrt(float(np.sum(a.weights * a.weights)) * float(np.sum(b.weights * b.weights)))
    return dot / denom


def _weigh(counts: Counter, vocabulary: dict[str, int], idf: np.ndarray) -> SparseVec:
    pairs = sorted((vocabulary[tok], c) for tok, c in counts.items() if tok in vocabulary)
    terms = np.array([t for t, _ in pairs], dtype=np.int64)
    tf = np.array([c for _, c in pairs], dtype=np.float64)
    return SparseVec(terms, tf * idf[terms] if terms.size else tf)


def _normalize(vec: SparseVec) -> SparseVec:
    if vec.weights.size == 0:
        return vec
    return SparseVec(vec.terms, vec.weights / math.sqrt(float(np.sum(vec.weights * vec.weights))))


def fit(corpus: Sequence[tuple[str, int]]) -> TfIdfIndex:
    return TfIdfIndex.fit(corpus)
