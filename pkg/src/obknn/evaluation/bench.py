"""Per-query latency of retrieval-enhanced prediction against the base-only path."""

from __future__ import annotations

import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..core import InferenceConfig, LabelTable, argmax_label, check_distribution
from ..datastore import Datastore
from ..inference import Query, predict

log = logging.getLogger(__name__)

BENCH_HEADER = ("size", "dim", "k", "queries", "retrieval_mean_ms", "retrieval_p95_ms",
                "base_mean_ms", "base_p95_ms", "slowdown")


@dataclass
class BenchRow:
    size: int
    dim: int
    k: int
    queries: int
    retrieval_mean_ms: float
    retrieval_p95_ms: float
    base_mean_ms: float
    base_p95_ms: float

    @property
    def slowdown(self) -> float:
        return self.retrieval_mean_ms / self.base_mean_ms

    def as_tuple(self) -> tuple:
        return (self.size, self.dim, self.k, self.queries, self.retrieval_mean_ms, self.retrieval_p95_ms,
                self.base_mean_ms, self.base_p95_ms, self.slowdown)


def bench(sizes: Sequence[int], dim: int = 256, queries: int = 100, k: int = 16, *, num_labels: int = 42,
          lam: float = 0.2, seed: int = 0, warmup: int = 3, repeats: int = 5) -> list[BenchRow]:
    """Time ``predict`` and the base-only path on random stores of each size.

    Base-only means validating the base distribution and taking its argmax,
    i.e. ``predict`` minus retrieval. Non-positive sizes are skipped.
    """
    if dim < 1 or queries < 1 or k < 1 or repeats < 1:
        raise ValueError("dim, queries, k and repeats must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = LabelTable(tuple(f"rel_{i}" for i in range(num_labels)))
    cfg = InferenceConfig(k=k, lam=lam)
    qs = [Query(rng.standard_normal(dim), rng.dirichlet(np.ones(num_labels))) for _ in range(queries)]
    stores = {}
    for size in sizes:
        if size <= 0:
            log.warning("skipping store size %d: an empty store cannot be queried", size)
            continue
        stores[int(size)] = Datastore.from_arrays(rng.standard_normal((size, dim), dtype=np.float32),
                                                  rng.integers(0, num_labels, size), labels)
    retrieval = {size: np.full(queries, np.inf) for size in stores}
    base = {size: np.full(queries, np.inf) for size in stores}
    for q in qs[:warmup]:
        for store in stores.values():
            predict(store, q, cfg)
        argmax_label(check_distribution(q.base_dist, num_labels))
    # Sizes are visited round-robin inside each repeat so machine-wide drift hits
    # every size alike; the per-query minimum over repeats drops scheduler noise.
    for _ in range(repeats):
        for size, store in stores.items():
            r = retrieval[size]
            for i, q in enumerate(qs):
                t0 = time.perf_counter()
                predict(store, q, cfg)
                r[i] = min(r[i], time.perf_counter() - t0)
            # own loop: interleaving with full scans would charge cache misses to the base path
            b = base[size]
            for q in qs:
                argmax_label(check_distribution(q.base_dist, num_labels))
            for i, q in enumerate(qs):
                t0 = time.perf_counter()
                argmax_label(check_distribution(q.base_dist, num_labels))
                b[i] = min(b[i], time.perf_counter() - t0)
    rows = []
    for size in stores:
        r, b = retrieval[size], base[size]
        rows.append(BenchRow(size, dim, k, queries, 1e3 * float(r.mean()), 1e3 * float(np.percentile(r, 95)),
                             1e3 * float(b.mean()), 1e3 * float(np.percentile(b, 95))))
        log.info("size %d: retrieval %.3f ms, base %.4f ms", size, rows[-1].retrieval_mean_ms,
                 rows[-1].base_mean_ms)
    return rows
