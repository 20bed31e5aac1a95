"""Environments the network can act in, and spike-to-action selectors.

Besides the built-in :class:`GridWorld` and :class:`DatasetEnvironment`, any
program speaking newline-delimited JSON on stdin/stdout can be plugged in via
:class:`ExternalEnvironment`. Requests are ``{"type": "reset"}``,
``{"type": "step", "action": k}`` and ``{"type": "close"}``; replies to reset
and step are ``{"observation": [...], "reward": r, "done": b, "info": {...}}``.
"""

from __future__ import annotations

import json
import subprocess
import sys
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import IO, Any, Sequence

import numpy as np

from .data import Dataset, preprocess
from .errors import EnvironmentStateError, SNNError, ValidationError


@dataclass
class EnvStep:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict[str, str] = field(default_factory=dict)


class Environment(ABC):
    n_actions: int = 1

    @abstractmethod
    def reset(self) -> np.ndarray: ...

    @abstractmethod
    def step(self, action: int) -> EnvStep: ...

    def close(self) -> None:
        pass

    def render(self) -> str:
        return ""

    def _check_action(self, action: int) -> int:
        if not 0 <= int(action) < self.n_actions:
            raise ValidationError(f"action {action} outside [0, {self.n_actions})")
        return int(action)


class GridWorld(Environment):
    """Agent walks on a grid toward a goal cell; walls block movement.

    Actions: 0 up, 1 right, 2 down, 3 left. Positions are (x, y) with y
    growing downward. Observations are one-hot over the ``width * height`` cells.
    """

    MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))
    n_actions = 4

    def __init__(
        self,
        width: int = 8,
        height: int = 8,
        start: tuple[int, int] = (0, 0),
        goal: tuple[int, int] | None = None,
        max_steps: int = 200,
        step_penalty: float = 0.01,
        goal_reward: float = 1.0,
    ) -> None:
        if width < 1 or height < 1 or max_steps < 1:
            raise ValidationError("width, height and max_steps must be positive")
        self.width, self.height = int(width), int(height)
        self.start = tuple(int(v) for v in start)
        self.goal = tuple(int(v) for v in goal) if goal is not None else (self.width - 1, self.height - 1)
        for pos in (self.start, self.goal):
            if not self._inside(pos):
                raise ValidationError(f"position {pos} outside the {self.width}x{self.height} grid")
        if self.start == self.goal:
            raise ValidationError("start and goal must differ")
        self.max_steps = int(max_steps)
        self.step_penalty = float(step_penalty)
        self.goal_reward = float(goal_reward)
        self.reset()

    def _inside(self, pos) -> bool:
        return 0 <= pos[0] < self.width and 0 <= pos[1] < self.height

    def observation(self) -> np.ndarray:
        obs = np.zeros(self.width * self.height)
        obs[self.pos[1] * self.width + self.pos[0]] = 1.0
        return obs

    def reset(self) -> np.ndarray:
        self.pos = self.start
        self.steps = 0
        self.done = False
        return self.observation()

    def step(self, action: int) -> EnvStep:
        if self.done:
            raise EnvironmentStateError("episode finished; call reset()")
        dx, dy = self.MOVES[self._check_action(action)]
        nxt = (self.pos[0] + dx, self.pos[1] + dy)
        if self._inside(nxt):
            self.pos = nxt
        self.steps += 1
        if self.pos == self.goal:
            reward, self.done = self.goal_reward, True
        else:
            reward, self.done = -self.step_penalty, self.steps >= self.max_steps
        return EnvStep(self.observation(), reward, self.done, {"x": str(self.pos[0]), "y": str(self.pos[1])})

    def render(self) -> str:
        rows = []
        for y in range(self.height):
            row = []
            for x in range(self.width):
                row.append("A" if (x, y) == self.pos else "G" if (x, y) == self.goal else ".")
            rows.append("".join(row))
        return "\n".join(rows)

    def reward_bounds(self) -> tuple[float, float]:
        return -self.step_penalty * self.max_steps, self.goal_reward


class DatasetEnvironment(Environment):
    """Replays a dataset one sample per step; actions are ignored and reward is 0."""

    def __init__(self, dataset: Dataset, ops: Sequence[dict[str, Any]] = ()) -> None:
        if len(dataset) == 0:
            raise ValidationError("dataset is empty")
        self.dataset = dataset
        self.ops = list(ops)
        self.reset()

    def _obs(self, i: int) -> np.ndarray:
        sample = self.dataset.samples[i]
        if self.ops:
            sample = preprocess(sample, self.ops)
        return np.asarray(sample, dtype=np.float64).reshape(-1)

    def reset(self) -> np.ndarray:
        self.index = 0
        self.done = False
        return self._obs(0)

    def step(self, action: int = 0) -> EnvStep:
        if self.done:
            raise EnvironmentStateError("dataset exhausted; call reset()")
        i = self.index
        self.index += 1
        self.done = self.index >= len(self.dataset)
        return EnvStep(self._obs(i), 0.0, self.done, {"label": str(int(self.dataset.labels[i])), "index": str(i)})


class ExternalEnvironment(Environment):
    """Environment living in another process, spoken to over the NDJSON protocol."""

    def __init__(self, command: Sequence[str], n_actions: int) -> None:
        self.n_actions = int(n_actions)
        self.proc = subprocess.Popen(
            list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )

    def _request(self, msg: dict[str, Any]) -> EnvStep:
        assert self.proc.stdin is not None and self.proc.stdout is not None
        self.proc.stdin.write(json.dumps(msg) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise SNNError("external environment closed its output")
        reply = json.loads(line)
        if "error" in reply:
            raise EnvironmentStateError(reply["error"])
        return EnvStep(
            np.asarray(reply["observation"], dtype=np.float64),
            float(reply.get("reward", 0.0)),
            bool(reply.get("done", False)),
            {str(k): str(v) for k, v in reply.get("info", {}).items()},
        )

    def reset(self) -> np.ndarray:
        return self._request({"type": "reset"}).observation

    def step(self, action: int) -> EnvStep:
        return self._request({"type": "step", "action": self._check_action(action)})

    def close(self) -> None:
        if self.proc.poll() is None:
            assert self.proc.stdin is not None
            self.proc.stdin.write(json.dumps({"type": "close"}) + "\n")
            self.proc.stdin.flush()
            self.proc.wait(timeout=10)


def _reply(step: EnvStep) -> dict[str, Any]:
    return {
        "observation": step.observation.tolist(),
        "reward": step.reward,
        "done": step.done,
        "info": step.info,
    }


def serve(env: Environment, instream: IO[str] = sys.stdin, outstream: IO[str] = sys.stdout) -> None:
    """Expose ``env`` over the NDJSON protocol until a close request or EOF."""
    for line in instream:
        if not line.strip():
            continue
        msg = json.loads(line)
        kind = msg.get("type")
        try:
            if kind == "reset":
                reply = _reply(EnvStep(env.reset(), 0.0, False, {}))
            elif kind == "step":
                reply = _reply(env.step(int(msg["action"])))
            elif kind == "close":
                env.close()
                return
            else:
                reply = {"error": f"unknown message type {kind!r}"}
        except SNNError as exc:
            reply = {"error": str(exc)}
        outstream.write(json.dumps(reply) + "\n")
        outstream.flush()


def group_scores(spikes: np.ndarray, n_actions: int) -> np.ndarray:
    """Sum spikes (a vector, or a (steps, n) window) in ``n_actions`` contiguous groups."""
    spikes = np.asarray(spikes)
    if spikes.ndim == 2:
        spikes = spikes.sum(axis=0)
    n = spikes.shape[0]
    if n_actions < 1 or n % n_actions:
        raise ValidationError(f"layer of {n} neurons cannot be split into {n_actions} equal groups")
    return spikes.reshape(n_actions, n // n_actions).sum(axis=1).astype(np.float64)


def select_multinomial(spikes: np.ndarray, n_actions: int, rng: np.random.Generator) -> int:
    """Sample an action with probability proportional to its group's spike count."""
    scores = group_scores(spikes, n_actions)
    total = scores.sum()
    if total == 0:
        return int(rng.integers(n_actions))
    cdf = np.cumsum(scores) / total
    return int(min(np.searchsorted(cdf, rng.random(), side="right"), n_actions - 1))


def select_argmax(spikes: np.ndarray, n_actions: int, rng: np.random.Generator) -> int:
    scores = group_scores(spikes, n_actions)
    best = np.flatnonzero(scores == scores.max())
    if best.size == 1:
        return int(best[0])
    return int(best[rng.integers(best.size)])


SELECTORS = {"multinomial": select_multinomial, "argmax": select_argmax}


if __name__ == "__main__":  # pragma: no cover - exercised through a subprocess in tests
    serve(GridWorld(**json.loads(sys.argv[1]) if len(sys.argv) > 1 else {}))
