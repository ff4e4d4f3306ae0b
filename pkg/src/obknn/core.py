"""Shared domain types and numeric kernels.

Embeddings are plain 1-D ``float32`` arrays and label distributions are 1-D
``float64`` arrays; the helpers here validate and coerce to those forms.
All probability arithmetic happens in float64.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DimensionError, DistributionError, LabelError

DIST_ATOL = 1e-9


class Metric(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    SQUARED_EUCLIDEAN = "squared_euclidean"
    ONE_MINUS_COSINE = "one_minus_cosine"

    @classmethod
    def parse(cls, value: Metric | str) -> Metric:
        try:
            return cls(value)
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown metric {value!r}; expected one of {choices}") from None


@dataclass(frozen=True)
class LabelTable:
    """Bijection between relation names and dense ids ``0..n-1``.

    ``na_label`` names the "no relation" class; when set, micro-F1 excludes it.
    """

    names: tuple[str, ...]
    na_label: str | None = None
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        index = {}
        for i, name in enumerate(names):
            if not isinstance(name, str):
                raise LabelError(f"label names must be strings, got {name!r}")
            if name in index:
                raise LabelError(f"duplicate label name {name!r}")
            index[name] = i
        if self.na_label is not None and self.na_label not in index:
            raise LabelError(f"NA label {self.na_label!r} is not in the label table")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def id_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise LabelError(f"unknown label {name!r}") from None

    def name_of(self, label_id: int) -> str:
        self.check_id(label_id)
        return self.names[label_id]

    def check_id(self, label_id) -> int:
        if isinstance(label_id, (bool, np.bool_)) or not isinstance(label_id, (int, np.integer)):
            raise LabelError(f"label id must be an integer, got {label_id!r}")
        if not 0 <= label_id < len(self.names):
            raise LabelError(f"label id {label_id} out of range for {len(self.names)} labels")
        return int(label_id)

    @property
    def na_id(self) -> int | None:
        return None if self.na_label is None else self._index[self.na_label]


@dataclass(frozen=True)
class InferenceConfig:
    """Retrieval and interpolation settings; defaults are k=16, lambda=0.2."""

    k: int = 16
    lam: float = 0.2
    metric: Metric = Metric.EUCLIDEAN
    temperature: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        if isinstance(self.k, bool) or not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam!r}")
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise ValueError(f"temperature must be positive and finite, got {self.temperature!r}")

    def to_dict(self) -> dict:
        return {"k": int(self.k), "lambda": float(self.lam), "metric": self.metric.value,
                "temperature": float(self.temperature)}


def as_embedding(values: Iterable[float] | np.ndarray, dim: int | None = None) -> np.ndarray:
    """Coerce ``values`` to a finite 1-D float32 embedding, optionally of a fixed dim."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"embedding must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateInputError("embedding contains NaN or infinite entries")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"embedding has dim {arr.shape[0]}, expected {dim}")
    return arr


def check_distribution(probs, num_labels: int | None = None, atol: float = DIST_ATOL) -> np.ndarray:
    """Validate ``probs`` as a probability vector and return it as float64."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DistributionError(f"distribution must be a non-empty 1-D vector, got shape {p.shape}")
    if num_labels is not None and p.shape[0] != num_labels:
        raise DistributionError(f"distribution has {p.shape[0]} entries, expected {num_labels}")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise DistributionError("distribution entries must lie in [0, 1]")
    total = math.fsum(p)
    if abs(total - 1.0) > atol:
        raise DistributionError(f"distribution sums to {total!r}, not 1")
    return p


def distance(a, b, metric: Metric | str = Metric.EUCLIDEAN) -> float:
    """Distance between two embeddings, computed in float64."""
    metric = Metric.parse(metric)
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise DimensionError(f"cannot compare vectors of shape {x.shape} and {y.shape}")
    if metric is Metric.ONE_MINUS_COSINE:
        # sqrt(|a|^2 |b|^2) keeps cos(a, a) exactly 1 and the result symmetric.
        denom = math.sqrt(math.fsum(x * x) * math.fsum(y * y))
        if denom == 0.0:
            raise DegenerateInputError("cosine distance is undefined for a zero-norm vector")
        cos = math.fsum(x * y) / denom
        return min(2.0, max(0.0, 1.0 - cos))
    diff = x - y
    sq = math.fsum(diff * diff)
    return sq if metric is Metric.SQUARED_EUCLIDEAN else math.sqrt(sq)


def softmax(scores: Sequence[float] | np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Max-shifted softmax of ``scores / temperature``."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("softmax needs a non-empty 1-D score vector")
    if np.any(np.isnan(s)):
        raise ValueError("softmax input contains NaN")
    if not np.all(np.isfinite(s)):
        raise ValueError("softmax input contains infinite values")
    if not (temperature > 0 and math.isfinite(temperature)):
        raise ValueError(f"temperature must be positive, got {temperature!r}")
    z = s / temperature
    e = np.exp(z - z.max())
    return e / e.sum()


def argmax_label(dist) -> int:
    """Index of the largest probability; ties go to the smallest id."""
    p = np.asarray(dist, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DistributionError("cannot take argmax of an empty distribution")
    return int(np.argmax(p))
