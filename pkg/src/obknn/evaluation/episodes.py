"""K-shot episode sampling with a portable seeded generator.

The generator is PCG64 (``numpy.random.PCG64``) read through its raw 64-bit
output stream, which numpy keeps bit-stable across releases and platforms.
Bounded integers use rejection sampling and each label's pool is sampled
with a partial Fisher-Yates shuffle, so an episode depends only on the
training labels, the shot count and the seed.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
_TWO64 = 1 << 64


@dataclass(frozen=True)
class EpisodeSpec:
    shots: int
    seeds: tuple[int, ...] = DEFAULT_SEEDS

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if isinstance(self.shots, bool) or int(self.shots) != self.shots or self.shots < 1:
            raise ValueError(f"shots must be a positive integer, got {self.shots!r}")
        if not self.seeds:
            raise ValueError("an episode spec needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"seeds must be distinct, got {self.seeds}")
        if min(self.seeds) < 0:
            raise ValueError("seeds must be non-negative")

    def to_dict(self) -> dict:
        return {"shots": int(self.shots), "seeds": list(self.seeds)}


class PortableRng:
    """Minimal seeded integer source on top of the raw PCG64 stream."""

    def __init__(self, seed: int):
        self._bits = np.random.PCG64(seed)

    def next_u64(self) -> int:
        return int(self._bits.random_raw())

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = _TWO64 - (_TWO64 % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n


@dataclass
class Episode:
    indices: list[int]
    shortfall: dict[int, int] = field(default_factory=dict)


def sample_episode(labels: Sequence[int], shots: int | EpisodeSpec, seed: int,
                   num_labels: int | None = None) -> Episode:
    """Pick ``min(shots, available)`` training indices per label, returned sorted.

    ``labels`` holds the label id of each training instance. Labels with fewer
    than ``shots`` instances (including ``0..num_labels-1`` ids that never
    occur) are reported in ``shortfall`` as ``{label id: missing count}``.
    """
    if isinstance(shots, EpisodeSpec):
        shots = shots.shots
    if len(labels) == 0:
        raise ValueError("cannot sample an episode from an empty training set")
    pools: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        pools.setdefault(int(lab), []).append(i)
    if num_labels is not None:
        for lab in range(num_labels):
            pools.setdefault(lab, [])
    rng = PortableRng(seed)
    chosen: list[int] = []
    shortfall: dict[int, int] = {}
    for lab in sorted(pools):
        pool = pools[lab]
        m = min(shots, len(pool))
        if m < shots:
            shortfall[lab] = shots - m
        for i in range(m):
            j = i + rng.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        chosen.extend(pool[:m])
    return Episode(sorted(chosen), shortfall)
