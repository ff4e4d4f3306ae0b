"""Evaluation runs, few-shot episodes and lambda/k sweeps."""

from __future__ import annotations

import statistics
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..core import InferenceConfig, argmax_label
from ..datastore import Datastore, NeighborSet
from ..errors import DegenerateQueryError
from ..inference import Query, interpolate, knn_distribution, predict_batch, thread_count
from ..tfidf import TfIdfIndex
from .episodes import EpisodeSpec, sample_episode
from .io import Split, load_pair
from .metrics import micro_f1

RETRIEVERS = ("embedding", "tfidf", "none")
TFIDF_MODES = ("interpolate", "replace")


@dataclass
class EvalReport:
    per_seed_f1: list[float]
    per_seed_precision: list[float]
    per_seed_recall: list[float]
    mean: float
    std: float
    config: InferenceConfig
    episodes: EpisodeSpec | None
    seeds: list[int]
    retriever: str = "embedding"
    tfidf_mode: str | None = None
    n_train: int = 0
    n_test: int = 0
    shortfall: dict[str, int] = field(default_factory=dict)
    degenerate_queries: list[int] = field(default_factory=list)
    predictions: list[list[int]] = field(default_factory=list, repr=False)

    @classmethod
    def aggregate(cls, f1s, precisions, recalls, **kw) -> EvalReport:
        f1s = [float(f) for f in f1s]
        # population std over seeds
        return cls(f1s, list(map(float, precisions)), list(map(float, recalls)),
                   statistics.fmean(f1s), statistics.pstdev(f1s), **kw)

    def to_dict(self) -> dict:
        return {
            "per_seed_f1": self.per_seed_f1,
            "per_seed_precision": self.per_seed_precision,
            "per_seed_recall": self.per_seed_recall,
            "mean_f1": self.mean,
            "std_f1": self.std,
            "seeds": self.seeds,
            "config": self.config.to_dict(),
            "episodes": None if self.episodes is None else self.episodes.to_dict(),
            "retriever": self.retriever,
            "tfidf_mode": self.tfidf_mode,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "shortfall": self.shortfall,
            "degenerate_queries": self.degenerate_queries,
        }

    def summary(self) -> str:
        shots = "full training set" if self.episodes is None else f"{self.episodes.shots}-shot"
        seeds = ",".join(map(str, self.seeds)) or "-"
        lines = [
            f"micro-F1 {100 * self.mean:.2f} +/- {100 * self.std:.2f} ({shots}, seeds {seeds})",
            f"retriever={self.retriever} k={self.config.k} lambda={self.config.lam} "
            f"metric={self.config.metric.value} temperature={self.config.temperature}",
            "per seed: " + " ".join(f"{100 * f:.2f}" for f in self.per_seed_f1),
        ]
        if self.shortfall:
            lines.append("shortfall: " + ", ".join(f"{k} -{v}" for k, v in sorted(self.shortfall.items())))
        if any(self.degenerate_queries):
            lines.append(f"degenerate TF-IDF queries per seed: {self.degenerate_queries}")
        return "\n".join(lines)


def _check_retriever(retriever: str, tfidf_mode: str) -> None:
    if retriever not in RETRIEVERS:
        raise ValueError(f"retriever must be one of {RETRIEVERS}, got {retriever!r}")
    if tfidf_mode not in TFIDF_MODES:
        raise ValueError(f"tfidf_mode must be one of {TFIDF_MODES}, got {tfidf_mode!r}")


def _coerce(train, test, retriever, label_names, na_label) -> tuple[Split, Split]:
    if isinstance(train, Split) and isinstance(test, Split):
        return train, test
    return load_pair(train, test, retriever=retriever, label_names=label_names, na_label=na_label)


def _episodes(train: Split, spec: EpisodeSpec | None):
    """Yield ``(seed, train indices)``; one full-data pass without a spec."""
    if spec is None:
        return [(None, np.arange(len(train)))], {}
    runs, shortfall = [], {}
    for seed in spec.seeds:
        ep = sample_episode(train.golds, spec.shots, seed, num_labels=len(train.labels))
        runs.append((seed, np.asarray(ep.indices, dtype=np.int64)))
        shortfall = {train.labels.names[k]: v for k, v in ep.shortfall.items()}
    return runs, shortfall


def _pmap(fn, items, workers):
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _retrieve_all(train: Split, test: Split, idx: np.ndarray, retriever: str, k: int,
                  cfg: InferenceConfig) -> list[NeighborSet | None]:
    """Neighbors for every test instance; ``None`` marks a degenerate TF-IDF query."""
    if retriever == "embedding":
        store = Datastore.from_arrays(train.embeddings[idx], train.golds[idx], train.labels)
        return [store.knn_query(test.embeddings[i], k, cfg.metric) for i in range(len(test))]
    index = TfIdfIndex.fit((train.texts[i], int(train.golds[i])) for i in idx)
    out = []
    for text in test.texts:
        try:
            out.append(index.rank(text, k))
        except DegenerateQueryError:
            out.append(None)
    return out


def _combine(neighbors: list[NeighborSet | None], test: Split, k: int, lam: float, temperature: float,
             tfidf_mode: str | None) -> list[int]:
    num_labels = len(test.labels)
    preds = []
    for i, nb in enumerate(neighbors):
        base = test.base[i]
        if nb is None:
            preds.append(argmax_label(base))
            continue
        p_knn = knn_distribution(nb.head(k), num_labels, temperature)
        lam_eff = 1.0 if tfidf_mode == "replace" else lam
        preds.append(argmax_label(interpolate(p_knn, base, lam_eff)))
    return preds


def run_eval(train, test, cfg: InferenceConfig | None = None, spec: EpisodeSpec | None = None, *,
             retriever: str = "embedding", tfidf_mode: str = "interpolate",
             label_names: Sequence[str] | None = None, na_label: str | None = None,
             workers: int | None = None) -> EvalReport:
    """Score retrieval-enhanced predictions on ``test``.

    ``train``/``test`` are JSON Lines paths or already-loaded :class:`Split`s.
    With ``spec`` every seed samples its own K-shot episode and the datastore is
    rebuilt from only those instances; without it one run uses all of ``train``.
    ``retriever="none"`` scores the base distribution alone.
    """
    cfg = cfg or InferenceConfig()
    _check_retriever(retriever, tfidf_mode)
    train, test = _coerce(train, test, retriever, label_names, na_label)
    if len(test) == 0:
        raise ValueError("test set is empty")
    na = test.labels.na_id
    runs, shortfall = _episodes(train, spec)
    workers = thread_count() if workers is None else workers

    def one(run):
        _, idx = run
        if retriever == "none":
            preds = [argmax_label(test.base[i]) for i in range(len(test))]
            degenerate = 0
        elif retriever == "embedding":
            store = Datastore.from_arrays(train.embeddings[idx], train.golds[idx], train.labels)
            queries = [Query(test.embeddings[i], test.base[i]) for i in range(len(test))]
            preds = [label for label, _ in predict_batch(store, queries, cfg, workers=1)]
            degenerate = 0
        else:
            nbs = _retrieve_all(train, test, idx, retriever, cfg.k, cfg)
            preds = _combine(nbs, test, cfg.k, cfg.lam, cfg.temperature, tfidf_mode)
            degenerate = sum(nb is None for nb in nbs)
        return preds, micro_f1(preds, test.golds, na), degenerate

    results = _pmap(one, runs, workers)
    return EvalReport.aggregate(
        [r[1][2] for r in results], [r[1][0] for r in results], [r[1][1] for r in results],
        config=cfg, episodes=spec, seeds=[s for s, _ in runs if s is not None],
        retriever=retriever, tfidf_mode=tfidf_mode if retriever == "tfidf" else None,
        n_train=len(train), n_test=len(test), shortfall=shortfall,
        degenerate_queries=[r[2] for r in results], predictions=[r[0] for r in results],
    )


@dataclass
class SweepRow:
    lam: float
    k: int
    mean_f1: float
    std_f1: float
    per_seed_f1: list[float]


SWEEP_HEADER = ("lambda", "k", "mean_f1", "std_f1")
DEFAULT_LAMBDA_GRID = tuple(i / 10 for i in range(11))
DEFAULT_K_GRID = (1, 2, 4, 8, 16, 32)


def sweep(train, test, cfg: InferenceConfig | None = None, lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
          k_grid: Sequence[int] = DEFAULT_K_GRID, spec: EpisodeSpec | None = None, *,
          retriever: str = "embedding", tfidf_mode: str = "interpolate",
          label_names: Sequence[str] | None = None, na_label: str | None = None,
          workers: int | None = None) -> list[SweepRow]:
    """Evaluate every (lambda, k) cell on shared episodes.

    Neighbors are retrieved once per seed at the largest k; smaller k reuse the
    prefix, which is exact because neighbor order is total.
    """
    cfg = cfg or InferenceConfig()
    _check_retriever(retriever, tfidf_mode)
    if not lambda_grid or not k_grid:
        raise ValueError("lambda and k grids must be non-empty")
    cells = [replace(cfg, lam=float(lam), k=int(k)) for lam in lambda_grid for k in k_grid]
    train, test = _coerce(train, test, retriever, label_names, na_label)
    na = test.labels.na_id
    runs, _ = _episodes(train, spec)
    kmax = max(c.k for c in cells)
    workers = thread_count() if workers is None else workers

    def one(run):
        _, idx = run
        if retriever == "none":
            preds = [argmax_label(b) for b in test.base]
            return [micro_f1(preds, test.golds, na)[2]] * len(cells)
        nbs = _retrieve_all(train, test, idx, retriever, kmax, cfg)
        mode = tfidf_mode if retriever == "tfidf" else None
        return [micro_f1(_combine(nbs, test, c.k, c.lam, c.temperature, mode), test.golds, na)[2] for c in cells]

    per_seed = np.asarray(_pmap(one, runs, workers))  # (seeds, cells)
    rows = []
    for j, c in enumerate(cells):
        col = per_seed[:, j].tolist()
        rows.append(SweepRow(c.lam, c.k, statistics.fmean(col), statistics.pstdev(col), col))
    return rows


def sweep_table(rows: Sequence[SweepRow]) -> list[tuple]:
    return [(r.lam, r.k, r.mean_f1, r.std_f1) for r in rows]


def best_lambdas(rows: Sequence[SweepRow], k: int) -> list[float]:
    """Every lambda attaining the top mean F1 at ``k``."""
    at_k = [r for r in rows if r.k == k]
    best = max(r.mean_f1 for r in at_k)
    return [r.lam for r in at_k if r.mean_f1 == best]
