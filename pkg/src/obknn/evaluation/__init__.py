"""Experiment harness: scoring, episodes, sweeps, synthetic data and benchmarks."""

from .episodes import DEFAULT_SEEDS, EpisodeSpec, PortableRng, sample_episode
from .harness import DEFAULT_K_GRID, DEFAULT_LAMBDA_GRID, EvalReport, SweepRow, run_eval, sweep
from .io import Split, load_pair
from .metrics import micro_f1
from .synthetic import generate_synthetic

__all__ = [
    "DEFAULT_K_GRID", "DEFAULT_LAMBDA_GRID", "DEFAULT_SEEDS", "EpisodeSpec", "EvalReport", "PortableRng",
    "Split", "SweepRow", "generate_synthetic", "load_pair", "micro_f1", "run_eval", "sample_episode", "sweep",
]
