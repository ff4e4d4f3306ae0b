"""Figures written next to the CSV/JSON outputs of the CLI."""

from __future__ import annotations

import math
import os
from collections.abc import Sequence

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

from .evaluation.bench import BenchRow
from .evaluation.harness import SweepRow

GOLDEN = (math.sqrt(5) - 1.0) / 2.0

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _figure(width: float, ncols: int = 1) -> tuple[Figure, np.ndarray]:
    fig = Figure(figsize=(width, width * GOLDEN / ncols * 1.3), layout="constrained")
    return fig, np.atleast_1d(fig.subplots(1, ncols))


def _save(fig: Figure, path: str | os.PathLike) -> None:
    fig.savefig(path, dpi=150)


def _pick(values: Sequence, preferred):
    values = sorted(set(values))
    if preferred in values:
        return preferred
    return min(values, key=lambda v: abs(v - preferred))


@mpl.rc_context(STYLE)
def plot_sweep(rows: Sequence[SweepRow], path: str | os.PathLike, k: int = 16, lam: float = 0.2) -> None:
    """Two panels: F1 against lambda at ``k``, and F1 against k at ``lam``.

    When ``k``/``lam`` is not on the grid the nearest grid value is used.
    """
    k = _pick([r.k for r in rows], k)
    lam = _pick([r.lam for r in rows], lam)
    fig, (ax_l, ax_k) = _figure(7.0, 2)

    by_lam = sorted((r for r in rows if r.k == k), key=lambda r: r.lam)
    x = np.array([r.lam for r in by_lam])
    y = 100 * np.array([r.mean_f1 for r in by_lam])
    e = 100 * np.array([r.std_f1 for r in by_lam])
    ax_l.plot(x, y, "o-", color="C0", ms=3)
    ax_l.fill_between(x, y - e, y + e, color="C0", alpha=0.2, lw=0)
    ax_l.set_xlabel(r"$\lambda$")
    ax_l.set_ylabel("micro-F1 (%)")
    ax_l.set_title(rf"(a) $\lambda$ varies, k={k}")

    by_k = sorted((r for r in rows if r.lam == lam), key=lambda r: r.k)
    x = np.array([r.k for r in by_k])
    y = 100 * np.array([r.mean_f1 for r in by_k])
    e = 100 * np.array([r.std_f1 for r in by_k])
    ax_k.plot(x, y, "s-", color="C1", ms=3)
    ax_k.fill_between(x, y - e, y + e, color="C1", alpha=0.2, lw=0)
    if len(x) > 1 and x.min() > 0:
        ax_k.set_xscale("log", base=2)
        ax_k.set_xticks(x, [str(v) for v in x])
    ax_k.set_xlabel("k")
    ax_k.set_title(rf"(b) k varies, $\lambda$={lam:g}")
    _save(fig, path)


@mpl.rc_context(STYLE)
def plot_bench(rows: Sequence[BenchRow], path: str | os.PathLike) -> None:
    """Per-query latency against datastore size, log-log."""
    fig, (ax,) = _figure(4.0)
    sizes = np.array([r.size for r in rows])
    ax.plot(sizes, [r.retrieval_mean_ms for r in rows], "o-", label="retrieval-enhanced (mean)")
    ax.plot(sizes, [r.retrieval_p95_ms for r in rows], "o--", color="C0", alpha=0.5, label="retrieval-enhanced (p95)")
    ax.plot(sizes, [r.base_mean_ms for r in rows], "s-", color="C1", label="base only (mean)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("datastore size")
    ax.set_ylabel("latency per query (ms)")
    ax.legend(frameon=False)
    _save(fig, path)


@mpl.rc_context(STYLE)
def plot_case_study(evidence: dict, path: str | os.PathLike, top: int = 8) -> None:
    """Grouped bars of base, neighbor and final probabilities for the most likely labels."""
    names = evidence["labels"]
    p_base = np.asarray(evidence["p_base"])
    p_knn = np.asarray(evidence["p_knn"])
    final = np.asarray(evidence["final"])
    keep = np.argsort(-np.maximum.reduce([p_base, p_knn, final]), kind="stable")[: min(top, len(names))]
    keep = np.sort(keep)
    fig, (ax,) = _figure(max(4.0, 0.6 * len(keep) + 2))
    x = np.arange(len(keep))
    w = 0.27
    ax.bar(x - w, p_base[keep], w, label="base model")
    ax.bar(x, p_knn[keep], w, label="retrieved neighbors")
    ax.bar(x + w, final[keep], w, label=rf"final ($\lambda$={evidence['lambda']:g})")
    ax.set_xticks(x, [names[i] for i in keep], rotation=30, ha="right")
    ax.set_ylabel("probability")
    ax.set_ylim(0, 1.18)
    ax.set_yticks(np.linspace(0, 1, 6))
    ax.legend(frameon=False, loc="upper center", ncols=3)
    _save(fig, path)
