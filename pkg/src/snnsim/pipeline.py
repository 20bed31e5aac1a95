"""Closed loop between an environment and a network.

Each :meth:`Pipeline.step` does, in order:

1. pick an action from the output layer's spikes over the previous window,
2. step the environment with it,
3. difference the observation against the history ring and encode it,
4. run the network on the spike train, passing the reward to plasticity.
"""

from __future__ import annotations

import csv
import functools
import io
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, TextIO

import numpy as np

from .encoding import SpikeTrain, bernoulli_encode, poisson_encode
from .environment import SELECTORS, Environment, EnvStep
from .errors import DimensionError, ValidationError
from .network import Network, steps_for
from .serialization import atomic_write_bytes

Encoder = Callable[..., SpikeTrain]
ClampFn = Callable[[EnvStep, np.random.Generator], Mapping[str, np.ndarray] | None]


class HistoryRing:
    """Keeps up to ``length`` observations, taking every ``delta``-th one."""

    def __init__(self, length: int = 0, delta: int = 1) -> None:
        if length < 0 or delta < 1:
            raise ValidationError("history length must be >= 0 and delta >= 1")
        self.length = int(length)
        self.delta = int(delta)
        self.reset()

    def reset(self) -> None:
        self.entries: deque[tuple[int, np.ndarray]] = deque(maxlen=self.length or None)
        self.index = 0

    @property
    def stored_indices(self) -> list[int]:
        return [i for i, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def history_difference(ring: HistoryRing, obs: np.ndarray) -> np.ndarray:
    """Rectified difference of ``obs`` against the elementwise max of the stored history.

    Afterwards ``obs`` is stored if its observation index is a multiple of ``delta``.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if ring.length == 0:
        ring.index += 1
        return obs
    if ring.entries:
        first = ring.entries[0][1]
        if first.shape != obs.shape:
            raise DimensionError(f"observation shape {obs.shape} differs from history {first.shape}")
        background = np.max([e for _, e in ring.entries], axis=0)
        out = np.maximum(obs - background, 0.0)
    else:
        out = obs.copy()
    if ring.index % ring.delta == 0:
        ring.entries.append((ring.index, obs.copy()))
    ring.index += 1
    return out


def make_encoder(kind: str, **params: float) -> Encoder:
    if kind == "poisson":
        return functools.partial(poisson_encode, **params)
    if kind == "bernoulli":
        return functools.partial(bernoulli_encode, **params)
    raise ValidationError(f"unknown encoder {kind!r}")


@dataclass
class PipelineConfig:
    input_layer: str = "X"
    output_layer: str | None = None
    time_per_obs: float | None = None  # ms; None means a single dt step
    history_length: int = 0
    delta: int = 1
    selector: str | None = "multinomial"
    reset_per_obs: bool = False
    reset_per_episode: bool = False
    prime_on_reset: bool = False
    progress_interval: int = 0
    render: bool = False

    def __post_init__(self) -> None:
        if self.history_length < 0 or self.delta < 1:
            raise ValidationError("history_length must be >= 0 and delta >= 1")
        if self.selector is not None and self.selector not in SELECTORS:
            raise ValidationError(f"unknown action selector {self.selector!r}")


@dataclass
class EpisodeSummary:
    episode: int
    total_reward: float
    steps: int
    spike_counts: dict[str, int] = field(default_factory=dict)


class Pipeline:
    def __init__(
        self,
        network: Network,
        environment: Environment,
        encoder: Encoder,
        config: PipelineConfig | None = None,
        rng: np.random.Generator | None = None,
        clamp_fn: ClampFn | None = None,
        out: TextIO | None = None,
    ) -> None:
        self.network = network
        self.env = environment
        self.encoder = encoder
        self.config = config or PipelineConfig()
        self.rng = rng if rng is not None else network.rng
        if self.rng is None:
            raise ValidationError("pipeline needs a seeded random generator")
        self.clamp_fn = clamp_fn
        self.out = out
        if self.config.input_layer not in network.layers:
            raise ValidationError(f"unknown input layer {self.config.input_layer!r}")
        if self.config.output_layer is not None and self.config.output_layer not in network.layers:
            raise ValidationError(f"unknown output layer {self.config.output_layer!r}")
        self.time = self.config.time_per_obs if self.config.time_per_obs is not None else network.dt
        steps_for(self.time, network.dt)
        self.history = HistoryRing(self.config.history_length, self.config.delta)
        self.summaries: list[EpisodeSummary] = []
        self.step_count = 0
        self.episode = 0
        self._window = None
        self._needs_reset = True

    def _select_action(self) -> int:
        cfg = self.config
        if cfg.selector is None or cfg.output_layer is None or self.env.n_actions <= 1:
            return 0
        window = self._window
        if window is None:
            window = np.zeros(self.network.layers[cfg.output_layer].n)
        return SELECTORS[cfg.selector](window, self.env.n_actions, self.rng)

    def present(self, obs: np.ndarray, reward: float = 0.0, clamp: Mapping[str, Any] | None = None) -> np.ndarray:
        """Difference, encode and simulate one observation; returns the encoded spikes."""
        diffed = history_difference(self.history, obs)
        train = self.encoder(diffed, self.time, self.network.dt, rng=self.rng)
        if train.n != self.network.layers[self.config.input_layer].n:
            raise DimensionError(f"encoded observation has {train.n} channels, input layer has "
                                 f"{self.network.layers[self.config.input_layer].n}")
        if self.config.reset_per_obs:
            self.network.reset()
        self.network.run({self.config.input_layer: train}, time=self.time, clamp=clamp, reward=reward)
        if self.config.output_layer is not None:
            self._window = self.network.spike_counts[self.config.output_layer]
        return train.data

    def reset(self) -> np.ndarray:
        obs = self.env.reset()
        self.history.reset()
        self._window = None
        if self.config.reset_per_episode:
            self.network.reset()
        if self.config.prime_on_reset:
            self.present(obs)
        self._needs_reset = False
        return obs

    def step(self, clamp: Mapping[str, Any] | None = None) -> EnvStep:
        if self._needs_reset:
            self.reset()
        action = self._select_action()
        result = self.env.step(action)
        if clamp is None and self.clamp_fn is not None:
            clamp = self.clamp_fn(result, self.rng)
        self.present(result.observation, reward=result.reward, clamp=clamp)
        self.step_count += 1
        if self.config.render and self.out is not None:
            self.out.write(self.env.render() + "\n\n")
        if result.done:
            self._needs_reset = True
        return result

    def run_episode(self, on_step: Callable[[EnvStep, "Pipeline"], None] | None = None) -> EpisodeSummary:
        """Step until the environment reports ``done``."""
        self.reset()
        total = 0.0
        steps = 0
        counts = {name: 0 for name in self.network.layers}
        while True:
            result = self.step()
            total += result.reward
            steps += 1
            for name, c in self.network.spike_counts.items():
                counts[name] += int(c.sum())
            if on_step is not None:
                on_step(result, self)
            interval = self.config.progress_interval
            if interval and self.out is not None and self.step_count % interval == 0:
                self.out.write(f"episode {self.episode} step {steps} total steps {self.step_count}\n")
            if result.done:
                break
        summary = EpisodeSummary(self.episode, total, steps, counts)
        self.summaries.append(summary)
        self.episode += 1
        return summary

    def summaries_csv(self) -> str:
        buf = io.StringIO()
        layers = list(self.network.layers)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["episode", "total_reward", "steps", *[f"spikes_{n}" for n in layers]])
        for s in self.summaries:
            writer.writerow([s.episode, repr(s.total_reward), s.steps, *[s.spike_counts.get(n, 0) for n in layers]])
        return buf.getvalue()

    def write_summaries(self, path) -> None:
        atomic_write_bytes(path, self.summaries_csv().encode())
