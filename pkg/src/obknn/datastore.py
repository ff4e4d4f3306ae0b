"""Key-value datastore of (embedding, label id) pairs with exact k-NN search.

Keys are held as float32 and promoted to float64 inside the scan. Search is a
blocked linear scan, so results always equal a full sort of all distances,
with equal distances ordered by ascending entry id.

Binary layout (all little-endian)::

    b"OBKD" | version u16 | dim u32 | count u64
    label count u32 | per label: byte length u32, UTF-8 name | NA index i32 (-1 = unset)
    count x ( id u64 | label u32 | dim x f32 )
"""

from __future__ import annotations

import os
import struct
import threading
from collections.abc import Iterable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .core import LabelTable, Metric, as_embedding
from .errors import (
    DegenerateInputError,
    DimensionError,
    EmptyDatastoreError,
    FormatError,
    LabelError,
    NotFoundError,
)

MAGIC = b"OBKD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")
_U32 = struct.Struct("<I")
_I32 = struct.Struct("<i")

SCAN_BLOCK = 2048


@dataclass(frozen=True)
class NeighborSet:
    """Neighbors sorted by ascending distance, ties by ascending entry id."""

    ids: np.ndarray
    labels: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __iter__(self) -> Iterator[tuple[int, int, float]]:
        for i, lab, d in zip(self.ids.tolist(), self.labels.tolist(), self.distances.tolist()):
            yield i, lab, d

    def head(self, k: int) -> NeighborSet:
        """The ``k`` closest neighbors (a prefix, since the order is total)."""
        return NeighborSet(self.ids[:k], self.labels[:k], self.distances[:k])

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[int, int, float]]) -> NeighborSet:
        rows = list(triples)
        return cls(
            np.array([r[0] for r in rows], dtype=np.int64),
            np.array([r[1] for r in rows], dtype=np.int64),
            np.array([r[2] for r in rows], dtype=np.float64),
        )


class _RWLock:
    """Many concurrent readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writing = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writing:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if self._readers == 0:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writing or self._readers:
                self._cond.wait()
            self._writing = True
        try:
            yield
        finally:
            with self._cond:
                self._writing = False
                self._cond.notify_all()


def scan_distances(keys: np.ndarray, query: np.ndarray, metric: Metric,
                   sq_norms: np.ndarray | None = None, block: int = SCAN_BLOCK) -> np.ndarray:
    """Distances from ``query`` to every row of ``keys``, in float64.

    ``sq_norms`` (squared row norms) is required for the cosine metric.
    """
    n, dim = keys.shape
    q = np.asarray(query, dtype=np.float64)
    out = np.empty(n, dtype=np.float64)
    buf = np.empty((min(block, n), dim), dtype=np.float64)
    cosine = metric is Metric.ONE_MINUS_COSINE
    for start in range(0, n, block):
        stop = min(start + block, n)
        b = buf[: stop - start]
        if cosine:
            np.multiply(keys[start:stop], q, out=b)
        else:
            np.subtract(keys[start:stop], q, out=b)
            np.multiply(b, b, out=b)
        b.sum(axis=1, out=out[start:stop])
    if metric is Metric.EUCLIDEAN:
        np.sqrt(out, out=out)
    elif cosine:
        q_sq = float(np.dot(q, q))
        denom = np.sqrt(sq_norms * q_sq)
        if q_sq == 0.0 or np.any(denom == 0.0):
            raise DegenerateInputError("cosine distance is undefined for a zero-norm vector")
        np.divide(out, denom, out=out)
        np.subtract(1.0, out, out=out)
        np.clip(out, 0.0, 2.0, out=out)
    return out


def _row_sq_norms(keys: np.ndarray) -> np.ndarray:
    k64 = keys.astype(np.float64)
    return np.einsum("ij,ij->i", k64, k64)


class Datastore:
    """Mutable open-book memory mapping embeddings to relation label ids.

    ``dim`` may be left as ``None`` for an empty store; the first insertion fixes it.
    Concurrent :meth:`knn_query` calls are safe; mutations take an exclusive lock.
    """

    def __init__(self, labels: LabelTable, dim: int | None = None):
        if dim is not None and (int(dim) != dim or dim < 1):
            raise DimensionError(f"dim must be a positive integer, got {dim!r}")
        self.labels = labels
        self.dim = None if dim is None else int(dim)
        self._keys = np.empty((0, self.dim or 0), dtype=np.float32)
        self._sq_norms = np.empty(0, dtype=np.float64)
        self._ids = np.empty(0, dtype=np.int64)
        self._values = np.empty(0, dtype=np.int64)
        self._alive = np.empty(0, dtype=bool)
        self._rows = 0
        self._dead = 0
        self._row_of: dict[int, int] = {}
        self._next_id = 0
        self._lock = _RWLock()

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, records: Iterable[tuple[Sequence[float] | np.ndarray, int]], labels: LabelTable,
              dim: int | None = None) -> Datastore:
        """Store ``records`` in order under ids ``0..n-1``."""
        keys, values = [], []
        for i, (emb, value) in enumerate(records):
            try:
                key = as_embedding(emb, dim)
            except DimensionError as exc:
                raise DimensionError(f"record {i}: {exc}") from None
            except DegenerateInputError as exc:
                raise DegenerateInputError(f"record {i}: {exc}") from None
            try:
                values.append(labels.check_id(value))
            except LabelError as exc:
                raise LabelError(f"record {i}: {exc}") from None
            dim = key.shape[0]
            keys.append(key)
        store = cls(labels, dim)
        if keys:
            store._append(np.stack(keys), np.asarray(values, dtype=np.int64))
        return store

    @classmethod
    def from_arrays(cls, keys: np.ndarray, values: np.ndarray, labels: LabelTable) -> Datastore:
        """Vectorized :meth:`build` for an ``(n, dim)`` key matrix."""
        keys = np.asarray(keys, dtype=np.float32)
        if keys.ndim != 2 or keys.shape[1] < 1:
            raise DimensionError(f"keys must be an (n, dim) matrix, got shape {keys.shape}")
        if not np.all(np.isfinite(keys)):
            raise DegenerateInputError("keys contain NaN or infinite entries")
        values = np.asarray(values, dtype=np.int64)
        if values.shape != (keys.shape[0],):
            raise DimensionError("values must have one label id per key")
        if values.size and (values.min() < 0 or values.max() >= len(labels)):
            raise LabelError(f"label ids must lie in [0, {len(labels)})")
        store = cls(labels, keys.shape[1])
        if keys.shape[0]:
            store._append(keys, values)
        return store

    def _append(self, keys: np.ndarray, values: np.ndarray, ids: np.ndarray | None = None) -> np.ndarray:
        n = keys.shape[0]
        if ids is None:
            ids = np.arange(self._next_id, self._next_id + n, dtype=np.int64)
        needed = self._rows + n
        if needed > self._keys.shape[0]:
            cap = max(needed, 2 * self._keys.shape[0], 16)
            self._keys = _grow(self._keys, cap, self._rows)
            self._sq_norms = _grow(self._sq_norms, cap, self._rows)
            self._ids = _grow(self._ids, cap, self._rows)
            self._values = _grow(self._values, cap, self._rows)
            self._alive = _grow(self._alive, cap, self._rows)
        sl = slice(self._rows, needed)
        self._keys[sl] = keys
        self._sq_norms[sl] = _row_sq_norms(keys)
        self._ids[sl] = ids
        self._values[sl] = values
        self._alive[sl] = True
        for offset, entry_id in enumerate(ids.tolist()):
            self._row_of[entry_id] = self._rows + offset
        self._rows = needed
        if n:
            self._next_id = max(self._next_id, int(ids[-1]) + 1)
        return ids

    # -- mutation -----------------------------------------------------------

    def add(self, key, value: int) -> int:
        """Append one entry and return its fresh id."""
        with self._lock.write():
            emb = as_embedding(key, self.dim)
            value = self.labels.check_id(value)
            if self.dim is None:
                self.dim = emb.shape[0]
                self._keys = np.empty((0, self.dim), dtype=np.float32)
            ids = self._append(emb[None, :], np.array([value], dtype=np.int64))
            return int(ids[0])

    def edit(self, entry_id: int, new_value: int) -> None:
        """Relabel an entry; its key is untouched."""
        with self._lock.write():
            row = self._row(entry_id)
            self._values[row] = self.labels.check_id(new_value)

    def delete(self, entry_id: int) -> None:
        """Remove an entry. Its id is never reused."""
        with self._lock.write():
            row = self._row(entry_id)
            self._alive[row] = False
            del self._row_of[int(entry_id)]
            self._dead += 1
            if self._dead > max(64, self._rows // 4):
                self._compact()

    def _row(self, entry_id: int) -> int:
        try:
            return self._row_of[int(entry_id)]
        except (KeyError, TypeError, ValueError):
            raise NotFoundError(f"no entry with id {entry_id!r}") from None

    def _compact(self) -> None:
        keep = np.flatnonzero(self._alive[: self._rows])
        self._keys = self._keys[keep].copy()
        self._sq_norms = self._sq_norms[keep].copy()
        self._ids = self._ids[keep].copy()
        self._values = self._values[keep].copy()
        self._alive = np.ones(keep.shape[0], dtype=bool)
        self._rows = keep.shape[0]
        self._dead = 0
        self._row_of = {entry_id: row for row, entry_id in enumerate(self._ids.tolist())}

    # -- inspection ---------------------------------------------------------

    def __len__(self) -> int:
        return self._rows - self._dead

    @property
    def next_id(self) -> int:
        return self._next_id

    def __contains__(self, entry_id: object) -> bool:
        return entry_id in self._row_of

    def get(self, entry_id: int) -> tuple[np.ndarray, int]:
        """``(key, label id)`` of one entry."""
        with self._lock.read():
            row = self._row(entry_id)
            return self._keys[row].copy(), int(self._values[row])

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Copies of the live ``(ids, keys, label ids)`` in insertion order."""
        with self._lock.read():
            live = np.flatnonzero(self._alive[: self._rows])
            return self._ids[live].copy(), self._keys[live].copy(), self._values[live].copy()

    def __iter__(self) -> Iterator[tuple[int, np.ndarray, int]]:
        ids, keys, values = self.arrays()
        for i in range(ids.shape[0]):
            yield int(ids[i]), keys[i], int(values[i])

    # -- search -------------------------------------------------------------

    def knn_query(self, query, k: int, metric: Metric | str = Metric.EUCLIDEAN) -> NeighborSet:
        """Exact ``min(k, len(self))`` nearest entries to ``query``."""
        metric = Metric.parse(metric)
        if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
            raise ValueError(f"k must be a positive integer, got {k!r}")
        with self._lock.read():
            live = len(self)
            if live == 0:
                raise EmptyDatastoreError("cannot query an empty datastore")
            q = as_embedding(query, self.dim)
            n = self._rows
            dist = scan_distances(self._keys[:n], q, metric, self._sq_norms[:n])
            if self._dead:
                dist[~self._alive[:n]] = np.inf
            kk = min(int(k), live)
            if kk < n:
                kth = np.partition(dist, kk - 1)[kk - 1]
                cand = np.flatnonzero(dist <= kth)
            else:
                cand = np.arange(n)
            ids = self._ids[cand]
            order = np.lexsort((ids, dist[cand]))[:kk]
            rows = cand[order]
            return NeighborSet(self._ids[rows].copy(), self._values[rows].copy(), dist[rows])

    # -- persistence --------------------------------------------------------

    def to_bytes(self) -> bytes:
        """Serialize live entries (tombstones are dropped)."""
        ids, keys, values = self.arrays()
        dim = self.dim or 0
        parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, dim, ids.shape[0]), _U32.pack(len(self.labels))]
        for name in self.labels.names:
            raw = name.encode("utf-8")
            parts.append(_U32.pack(len(raw)))
            parts.append(raw)
        na = self.labels.na_id
        parts.append(_I32.pack(-1 if na is None else na))
        body = np.empty(ids.shape[0], dtype=_record_dtype(dim))
        body["id"] = ids
        body["label"] = values
        body["key"] = keys.reshape(ids.shape[0], dim)
        parts.append(body.tobytes())
        return b"".join(parts)

    def save(self, path: str | os.PathLike) -> None:
        data = self.to_bytes()
        tmp = f"{os.fspath(path)}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)

    @classmethod
    def from_bytes(cls, data: bytes) -> Datastore:
        if len(data) < _HEADER.size:
            raise FormatError("truncated header", len(data))
        magic, version, dim, count = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}", 0)
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}", 4)
        if dim == 0 and count:
            raise FormatError("non-empty store declares dim 0", 6)
        pos = _HEADER.size
        n_labels = _read(_U32, data, pos, "label count")
        pos += _U32.size
        names = []
        for _ in range(n_labels):
            length = _read(_U32, data, pos, "label name length")
            pos += _U32.size
            if pos + length > len(data):
                raise FormatError("truncated label name", pos)
            try:
                names.append(data[pos:pos + length].decode("utf-8"))
            except UnicodeDecodeError:
                raise FormatError("label name is not valid UTF-8", pos) from None
            pos += length
        na = _read(_I32, data, pos, "NA label index")
        if na < -1 or na >= n_labels:
            raise FormatError(f"NA label index {na} out of range", pos)
        try:
            labels = LabelTable(tuple(names), None if na == -1 else names[na])
        except LabelError as exc:
            raise FormatError(str(exc), _HEADER.size) from None
        pos += _I32.size
        rec = _record_dtype(dim)
        expected = pos + count * rec.itemsize
        if len(data) != expected:
            what = "truncated body" if len(data) < expected else "trailing bytes after body"
            raise FormatError(f"{what}: header declares {count} entries of dim {dim}, "
                              f"expected {expected} bytes, found {len(data)}", min(len(data), expected))
        body = np.frombuffer(data, dtype=rec, count=count, offset=pos)
        if count and body["id"].max() > np.iinfo(np.int64).max:
            raise FormatError("entry id exceeds the signed 64-bit range", pos)
        ids = body["id"].astype(np.int64)
        values = body["label"].astype(np.int64)
        keys = np.array(body["key"], dtype=np.float32).reshape(count, dim)
        bad = np.flatnonzero(values >= n_labels)
        if bad.size:
            raise FormatError(f"entry {bad[0]} has label id {values[bad[0]]} outside the label table",
                              pos + int(bad[0]) * rec.itemsize + 8)
        bad = np.flatnonzero(~np.all(np.isfinite(keys), axis=1))
        if bad.size:
            raise FormatError(f"entry {bad[0]} has a non-finite key", pos + int(bad[0]) * rec.itemsize + 12)
        if np.any(np.diff(ids) <= 0):
            raise FormatError("entry ids must be strictly increasing", pos)
        store = cls(labels, dim or None)
        if count:
            store._append(keys, values, ids)
        return store

    @classmethod
    def load(cls, path: str | os.PathLike) -> Datastore:
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("id", "<u8"), ("label", "<u4"), ("key", "<f4", (dim,))])


def _read(st: struct.Struct, data: bytes, pos: int, what: str) -> int:
    if pos + st.size > len(data):
        raise FormatError(f"truncated {what}", pos)
    return st.unpack_from(data, pos)[0]


def _grow(arr: np.ndarray, cap: int, used: int) -> np.ndarray:
    out = np.empty((cap,) + arr.shape[1:], dtype=arr.dtype)
    out[:used] = arr[:used]
    return out


def build(records, labels: LabelTable, dim: int | None = None) -> Datastore:
    return Datastore.build(records, labels, dim)


def load(path: str | os.PathLike) -> Datastore:
    return Datastore.load(path)


def save(store: Datastore, path: str | os.PathLike) -> None:
    store.save(path)


def knn_query(store: Datastore, query, k: int, metric: Metric | str = Metric.EUCLIDEAN) -> NeighborSet:
    return store.knn_query(query, k, metric)

