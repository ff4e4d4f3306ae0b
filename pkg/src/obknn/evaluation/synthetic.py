"""Synthetic train/test files with a known cluster structure.

Each label gets a mean on the unit sphere; instances are the mean plus
isotropic Gaussian noise. The simulated base model scores label ``j`` as::

    scores = SHARPNESS * q * (onehot(gold) + (1 - q) * BASE_NOISE * g),  g ~ N(0, I)

and its distribution is the softmax of those scores. ``q = base_quality``
sweeps the base model from uniform (``q = 0``) to a confident oracle
(``q = 1``).
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..core import softmax
from .io import write_jsonl

SHARPNESS = 4.0
BASE_NOISE = 2.0
_WORDS_PER_LABEL = 8
_SHARED_WORDS = 40
_TEXT_LEN = 8


def label_names(num_labels: int) -> list[str]:
    return [f"rel_{i}" for i in range(num_labels)]


def _split(rng: np.random.Generator, means: np.ndarray, per_label: int, noise: float, base_quality: float):
    num_labels, dim = means.shape
    golds = np.repeat(np.arange(num_labels), per_label)
    emb = means[golds] + noise * rng.standard_normal((golds.shape[0], dim))
    g = rng.standard_normal((golds.shape[0], num_labels))
    scores = SHARPNESS * base_quality * (np.eye(num_labels)[golds] + (1.0 - base_quality) * BASE_NOISE * g)
    base = np.stack([softmax(s) for s in scores])
    # Text: half the tokens from a label-specific vocabulary, the rest shared.
    own = rng.random((golds.shape[0], _TEXT_LEN)) < 0.5
    own_word = rng.integers(0, _WORDS_PER_LABEL, (golds.shape[0], _TEXT_LEN))
    shared_word = rng.integers(0, _SHARED_WORDS, (golds.shape[0], _TEXT_LEN))
    texts = []
    for i, y in enumerate(golds.tolist()):
        toks = [f"r{y}w{own_word[i, j]}" if own[i, j] else f"common{shared_word[i, j]}" for j in range(_TEXT_LEN)]
        texts.append(" ".join(toks))
    return golds, emb, base, texts


def generate_arrays(num_labels: int, dim: int, per_label: int, noise: float, base_quality: float, seed: int,
                    test_per_label: int | None = None) -> dict:
    """In-memory form of :func:`generate_synthetic`."""
    for name, v in (("num_labels", num_labels), ("dim", dim), ("per_label", per_label)):
        if v < 1:
            raise ValueError(f"{name} must be positive, got {v}")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    if not 0.0 <= base_quality <= 1.0:
        raise ValueError("base_quality must lie in [0, 1]")
    test_per_label = per_label if test_per_label is None else test_per_label
    rng = np.random.Generator(np.random.PCG64(seed))
    means = rng.standard_normal((num_labels, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    train = _split(rng, means, per_label, noise, base_quality)
    test = _split(rng, means, test_per_label, noise, base_quality)
    return {"labels": label_names(num_labels), "train": train, "test": test}


def generate_synthetic(num_labels: int, dim: int, per_label: int, noise: float, base_quality: float, seed: int,
                       out_dir: str | os.PathLike, test_per_label: int | None = None) -> tuple[Path, Path]:
    """Write ``train.jsonl``, ``test.jsonl`` and ``labels.txt`` under ``out_dir``.

    Instances appear grouped by label in id order, so the first-appearance
    label table matches ``labels.txt``.
    """
    data = generate_arrays(num_labels, dim, per_label, noise, base_quality, seed, test_per_label)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = data["labels"]
    paths = []
    for split in ("train", "test"):
        golds, emb, base, texts = data[split]
        rows = []
        for i in range(golds.shape[0]):
            row = {"id": i, "embedding": emb[i].astype(np.float32).tolist(), "label": names[golds[i]],
                   "text": texts[i]}
            if split == "test":
                row["base_dist"] = base[i].tolist()
            rows.append(row)
        path = out / f"{split}.jsonl"
        write_jsonl(path, rows)
        paths.append(path)
    (out / "labels.txt").write_text("".join(n + "\n" for n in names), encoding="utf-8")
    return paths[0], paths[1]
