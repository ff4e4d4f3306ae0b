"""Retrieval-enhanced prediction.

The neighbor distribution softmaxes negative distances over the retrieved
neighbors and sums the weights per label; the final distribution mixes it
with the base model's distribution::

    p_final = lam * p_knn + (1 - lam) * p_base
"""

from __future__ import annotations

import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import InferenceConfig, argmax_label, as_embedding, check_distribution, softmax
from .datastore import Datastore, NeighborSet
from .errors import DistributionError, EmptyNeighborSetError, LabelError, ObknnError

THREADS_ENV = "OBKNN_THREADS"


@dataclass(frozen=True)
class Query:
    embedding: np.ndarray
    base_dist: np.ndarray
    gold: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "embedding", as_embedding(self.embedding))
        object.__setattr__(self, "base_dist", check_distribution(self.base_dist))


@dataclass(frozen=True)
class Prediction:
    label: int
    probs: np.ndarray
    neighbors: NeighborSet
    knn_probs: np.ndarray
    base_probs: np.ndarray

    def __iter__(self):
        # allows ``label, probs, neighbors = predict(...)``
        return iter((self.label, self.probs, self.neighbors))


def knn_distribution(neighbors: NeighborSet, num_labels: int, temperature: float = 1.0) -> np.ndarray:
    """Label distribution from softmax(-distance / temperature) over ``neighbors``."""
    if len(neighbors) == 0:
        raise EmptyNeighborSetError("cannot form a neighbor distribution from zero neighbors")
    labels = np.asarray(neighbors.labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= num_labels:
        raise LabelError(f"neighbor label ids must lie in [0, {num_labels})")
    weights = softmax(-np.asarray(neighbors.distances, dtype=np.float64), temperature)
    return np.bincount(labels, weights=weights, minlength=num_labels)


def interpolate(p_knn, p_base, lam: float) -> np.ndarray:
    """``lam * p_knn + (1 - lam) * p_base``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam!r}")
    a = np.asarray(p_knn, dtype=np.float64)
    b = np.asarray(p_base, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DistributionError(f"distributions differ in shape: {a.shape} vs {b.shape}")
    return lam * a + (1.0 - lam) * b


def predict(store: Datastore, q: Query, cfg: InferenceConfig) -> Prediction:
    num_labels = len(store.labels)
    base = check_distribution(q.base_dist, num_labels)
    neighbors = store.knn_query(q.embedding, cfg.k, cfg.metric)
    p_knn = knn_distribution(neighbors, num_labels, cfg.temperature)
    probs = interpolate(p_knn, base, cfg.lam)
    return Prediction(argmax_label(probs), probs, neighbors, p_knn, base)


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


class BatchError(ObknnError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"query {index}: {type(cause).__name__}: {cause}")
        self.index = index
        self.cause = cause


def predict_batch(store: Datastore, qs: Sequence[Query], cfg: InferenceConfig,
                  workers: int | None = None) -> list[tuple[int, np.ndarray]]:
    """``predict`` over many queries, order preserved.

    The first failing query aborts the batch with a :class:`BatchError` carrying its index.
    """
    workers = thread_count() if workers is None else workers

    def one(i: int):
        try:
            p = predict(store, qs[i], cfg)
        except ObknnError as exc:
            raise BatchError(i, exc) from exc
        return p.label, p.probs

    if workers <= 1 or len(qs) < 2:
        return [one(i) for i in range(len(qs))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(len(qs))))
