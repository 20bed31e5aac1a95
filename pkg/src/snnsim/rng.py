"""Simulation-wide pseudo random number generation.

All stochastic draws in a simulation pull from one ``numpy.random.Generator``
backed by PCG64. Draw order is fixed by the callers:

1. model construction (weight initialisation, per-neuron thresholds),
2. per observation: clamp-mask choice, then spike encoding,
3. per pipeline step: action selection.

The identifier below is written into saved networks; bump it whenever the
algorithm or draw order changes.
"""

from __future__ import annotations

from typing import Any

import numpy as np

RNG_VERSION = "numpy-pcg64/1"


def make_rng(seed: int | None) -> np.random.Generator:
    if seed is None:
        raise ValueError("an explicit seed is required for reproducible runs")
    return np.random.Generator(np.random.PCG64(int(seed)))


def rng_state(rng: np.random.Generator) -> dict[str, Any]:
    return rng.bit_generator.state


def restore_rng(state: dict[str, Any]) -> np.random.Generator:
    if state.get("bit_generator") != "PCG64":
        raise ValueError(f"unsupported bit generator {state.get('bit_generator')!r}")
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)
