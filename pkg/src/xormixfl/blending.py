"""Same-label sample blending: the pairwise mix and its chained iterate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Dataset, Sample
from .errors import ConfigError, EmptyPool, LengthMismatch


@dataclass(frozen=True)
class BlendParams:
    alpha: float = 0.5
    p: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("blend.alpha", "out of (0,1)")
        if int(self.p) != self.p or self.p < 1:
            raise ConfigError("blend.p", "must be a positive integer")


@dataclass(frozen=True, eq=False)
class BlendedSample:
    values: np.ndarray
    label: int
    contributors: tuple[int, ...]


def blend_pair(acc, next_, alpha: float) -> np.ndarray:
    acc = np.asarray(acc, dtype=np.float64)
    next_ = np.asarray(next_, dtype=np.float64)
    if acc.shape != next_.shape:
        raise LengthMismatch(f"cannot blend shapes {acc.shape} and {next_.shape}")
    return alpha * acc + (1.0 - alpha) * next_


def _as_pool(samples: Dataset | Sequence[Sample]) -> Dataset:
    if isinstance(samples, Dataset):
        return samples
    samples = list(samples)
    if not samples:
        return Dataset(np.zeros((0, 0), dtype=np.uint8), np.zeros(0))
    return Dataset(np.stack([s.pixels for s in samples]), [s.label for s in samples], [s.id for s in samples])


def blend_chain(samples: Dataset | Sequence[Sample], params: BlendParams, rng: np.random.Generator) -> BlendedSample:
    """Blend ``min(p, len(samples))`` distinct random draws from a same-label pool.

    The first draw seeds the accumulator and each later draw is folded in with
    ``blend_pair(acc, draw, alpha)``, so ``p=1`` returns one raw sample as-is.
    """
    pool = _as_pool(samples)
    if len(pool) == 0:
        raise EmptyPool("cannot blend from an empty pool")
    labels = np.unique(pool.labels)
    if len(labels) != 1:
        raise ValueError(f"pool mixes labels {labels.tolist()}")
    k = min(params.p, len(pool))
    picks = rng.choice(len(pool), size=k, replace=False)
    acc = pool.images[picks[0]].astype(np.float64)
    for j in picks[1:]:
        acc = blend_pair(acc, pool.images[j], params.alpha)
    return BlendedSample(acc, int(labels[0]), tuple(int(pool.ids[j]) for j in picks))
