"""JSON Lines instance ingestion and CSV output.

One instance per line::

    {"id": 3, "embedding": [...], "label": "per:city_of_death",
     "text": "...", "base_dist": [...]}

``base_scores`` may replace ``base_dist``; scores are softmaxed on load. The
label table comes from an explicit label file when given, otherwise from the
order in which labels first appear (training file first).
"""

from __future__ import annotations

import csv
import json
import math
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from ..core import LabelTable, check_distribution, softmax
from ..errors import DistributionError, LabelError, ParseError


@dataclass
class RawInstance:
    line: int
    id: int | None
    embedding: list[float] | None
    label: str | None
    text: str | None
    base_dist: list[float] | None
    base_scores: list[float] | None


@dataclass
class Split:
    """A parsed instance file resolved against a label table."""

    path: str
    labels: LabelTable
    ids: list[int | None]
    golds: np.ndarray               # label id per instance, -1 when absent
    embeddings: np.ndarray | None   # (n, dim) float32
    texts: list[str | None]
    base: np.ndarray | None         # (n, num_labels) float64

    def __len__(self) -> int:
        return len(self.ids)


def _number_list(value, path, line, name) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ParseError(path, line, f"`{name}` must be a non-empty array of numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ParseError(path, line, f"`{name}` contains a non-numeric or non-finite entry: {v!r}")
        out.append(float(v))
    return out


def read_jsonl(path: str | os.PathLike) -> list[RawInstance]:
    """Parse an instance file without resolving labels."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(path, n, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(path, n, "each line must be a JSON object")
            inst_id = obj.get("id")
            if inst_id is not None and (isinstance(inst_id, bool) or not isinstance(inst_id, int) or inst_id < 0):
                raise ParseError(path, n, f"`id` must be a non-negative integer, got {inst_id!r}")
            label = obj.get("label")
            if label is not None and not isinstance(label, str):
                raise ParseError(path, n, f"`label` must be a string, got {label!r}")
            text = obj.get("text")
            if text is not None and not isinstance(text, str):
                raise ParseError(path, n, "`text` must be a string")
            emb = obj.get("embedding")
            dist = obj.get("base_dist")
            scores = obj.get("base_scores")
            if dist is not None and scores is not None:
                raise ParseError(path, n, "give either `base_dist` or `base_scores`, not both")
            out.append(RawInstance(
                line=n,
                id=inst_id,
                embedding=None if emb is None else _number_list(emb, path, n, "embedding"),
                label=label,
                text=text,
                base_dist=None if dist is None else _number_list(dist, path, n, "base_dist"),
                base_scores=None if scores is None else _number_list(scores, path, n, "base_scores"),
            ))
    return out


def read_label_file(path: str | os.PathLike) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip()]


def label_table_for(*groups: Iterable[RawInstance], names: Sequence[str] | None = None,
                    na_label: str | None = None) -> LabelTable:
    if names is None:
        seen: dict[str, None] = {}
        for group in groups:
            for inst in group:
                if inst.label is not None:
                    seen.setdefault(inst.label, None)
        names = list(seen)
    return LabelTable(tuple(names), na_label)


def resolve(path, raws: list[RawInstance], labels: LabelTable, *, need_embedding: bool = False,
            need_label: bool = False, need_base: bool = False, need_text: bool = False) -> Split:
    """Check required fields and convert ``raws`` to arrays."""
    n_labels = len(labels)
    golds = np.full(len(raws), -1, dtype=np.int64)
    embs, base, dim = [], [], None
    for i, r in enumerate(raws):
        if need_label and r.label is None:
            raise ParseError(path, r.line, "missing `label`")
        if r.label is not None:
            try:
                golds[i] = labels.id_of(r.label)
            except LabelError as exc:
                raise ParseError(path, r.line, str(exc)) from None
        if need_text and r.text is None:
            raise ParseError(path, r.line, "missing `text`")
        if need_embedding:
            if r.embedding is None:
                raise ParseError(path, r.line, "missing `embedding`")
            if dim is None:
                dim = len(r.embedding)
            elif len(r.embedding) != dim:
                raise ParseError(path, r.line, f"embedding has dim {len(r.embedding)}, expected {dim}")
            embs.append(r.embedding)
        if need_base:
            vec = r.base_dist if r.base_dist is not None else r.base_scores
            if vec is None:
                raise ParseError(path, r.line, "missing `base_dist` or `base_scores`")
            if len(vec) != n_labels:
                raise ParseError(path, r.line, f"base distribution has {len(vec)} entries but the label "
                                               f"table has {n_labels}; pass an explicit label file")
            try:
                base.append(check_distribution(vec) if r.base_dist is not None else softmax(vec))
            except DistributionError as exc:
                raise ParseError(path, r.line, str(exc)) from None
    return Split(
        path=str(path),
        labels=labels,
        ids=[r.id for r in raws],
        golds=golds,
        embeddings=np.asarray(embs, dtype=np.float32) if need_embedding and embs else None,
        texts=[r.text for r in raws],
        base=np.asarray(base, dtype=np.float64) if need_base and base else None,
    )


def load_pair(train_path, test_path, *, retriever: str = "embedding", label_names: Sequence[str] | None = None,
              na_label: str | None = None) -> tuple[Split, Split]:
    """Load a train/test pair sharing one label table."""
    train_raw = read_jsonl(train_path)
    test_raw = read_jsonl(test_path)
    if not train_raw:
        raise ParseError(train_path, 0, "training file has no instances")
    if not test_raw:
        raise ParseError(test_path, 0, "test file has no instances")
    labels = label_table_for(train_raw, test_raw, names=label_names, na_label=na_label)
    emb = retriever == "embedding"
    txt = retriever == "tfidf"
    train = resolve(train_path, train_raw, labels, need_embedding=emb, need_label=True, need_text=txt)
    test = resolve(test_path, test_raw, labels, need_embedding=emb, need_label=True, need_base=True,
                   need_text=txt)
    if emb and train.embeddings.shape[1] != test.embeddings.shape[1]:
        raise ParseError(test_path, test_raw[0].line,
                         f"embedding dim {test.embeddings.shape[1]} differs from training dim "
                         f"{train.embeddings.shape[1]}")
    return train, test


def write_jsonl(path: str | os.PathLike, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
