"""Spike encoders for non-negative data."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass
class SpikeTrain:
    """Binary (steps, n) array sampled every ``dt`` ms."""

    data: np.ndarray
    dt: float = 1.0

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ValidationError("spike train data must be (steps, n)")
        if self.data.dtype != bool:
            if not np.isin(self.data, (0, 1)).all():
                raise ValidationError("spike trains must be binary")
            self.data = self.data.astype(bool)

    @property
    def steps(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]


def _n_steps(time: float, dt: float) -> int:
    if not dt > 0 or time < 0:
        raise ValidationError("need dt > 0 and time >= 0")
    return int(math.floor(time / dt + 1e-9))


def poisson_encode(values, time: float, dt: float = 1.0, max_rate: float = 127.5, rng: np.random.Generator | None = None) -> SpikeTrain:
    """Rate code: the largest value fires at ``max_rate`` Hz, others proportionally.

    Each step is an independent Bernoulli draw with probability ``rate * dt / 1000``.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.isfinite(values).all() or (values < 0).any():
        raise ValidationError("poisson_encode needs finite non-negative values")
    if max_rate < 0 or max_rate * dt / 1000.0 > 1.0:
        raise ValidationError(f"max_rate={max_rate} Hz gives a per-step probability above 1 at dt={dt}")
    steps = _n_steps(time, dt)
    peak = values.max() if values.size else 0.0
    if peak == 0:
        return SpikeTrain(np.zeros((steps, values.size), dtype=bool), dt)
    p = (max_rate * dt / 1000.0) * (values / peak)
    return SpikeTrain(_draw(p, steps, rng), dt)


def bernoulli_encode(values, time: float, dt: float = 1.0, max_prob: float = 1.0, rng: np.random.Generator | None = None) -> SpikeTrain:
    """Per-step spike probability ``max_prob * value`` for values in [0, 1]."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if not 0 < max_prob <= 1:
        raise ValidationError("max_prob must lie in (0, 1]")
    if not np.isfinite(values).all() or (values < 0).any() or (values > 1).any():
        raise ValidationError("bernoulli_encode needs values in [0, 1]")
    steps = _n_steps(time, dt)
    return SpikeTrain(_draw(max_prob * values, steps, rng), dt)


def _draw(p: np.ndarray, steps: int, rng: np.random.Generator | None) -> np.ndarray:
    if rng is None:
        raise ValidationError("encoders need an explicit random generator")
    return rng.random((steps, p.size)) < p
