"""Micro-averaged precision/recall/F1 for relation classification."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np


def micro_f1(preds: Sequence[int], golds: Sequence[int], na: int | None = None) -> tuple[float, float, float]:
    """Micro ``(precision, recall, f1)``.

    With ``na`` set, the no-relation class is excluded: a hit counts only when
    prediction and gold agree on a non-NA label, precision is over non-NA
    predictions and recall over non-NA golds. Any 0/0 is taken as 0. Without
    ``na`` every instance counts, so all three equal accuracy.
    """
    p = np.asarray(preds, dtype=np.int64)
    g = np.asarray(golds, dtype=np.int64)
    if p.shape != g.shape or p.ndim != 1:
        raise ValueError(f"preds and golds differ in length: {p.shape} vs {g.shape}")
    if p.size == 0:
        raise ValueError("micro_f1 needs at least one instance")
    if na is None:
        acc = float(np.count_nonzero(p == g)) / p.size
        return acc, acc, acc
    correct = int(np.count_nonzero((p == g) & (g != na)))
    predicted = int(np.count_nonzero(p != na))
    gold = int(np.count_nonzero(g != na))
    precision = correct / predicted if predicted else 0.0
    recall = correct / gold if gold else 0.0
    # 2PR/(P+R) reduces to 2c/(p+g); one division keeps the result correctly rounded
    f1 = 2 * correct / (predicted + gold) if correct else 0.0
    return precision, recall, f1
