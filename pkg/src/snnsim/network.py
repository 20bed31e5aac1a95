"""Synchronous simulation of layers and connections.

Within one step every layer receives input computed from the *previous*
step's spikes, so activity crosses one connection per step. Weight
normalization runs once at the start of each :meth:`Network.run` call.
"""

from __future__ import annotations

import math
from typing import Any, Mapping

import numpy as np

from .encoding import SpikeTrain
from .errors import DimensionError, NumericError, ValidationError
from .neurons import Input, Nodes
from .rng import make_rng
from .topology import Connection

ConnKey = tuple[str, str]


def steps_for(time: float, dt: float) -> int:
    ratio = time / dt
    steps = round(ratio)
    if abs(ratio - steps) > 1e-9 or steps < 0:
        raise ValidationError(f"time={time} is not a non-negative multiple of dt={dt}")
    return int(steps)


def _conn_key(key: str | ConnKey) -> ConnKey:
    if isinstance(key, str):
        source, sep, target = key.partition("->")
        if not sep:
            raise ValidationError(f"connection keys look like 'source->target', got {key!r}")
        return source, target
    return tuple(key)  # type: ignore[return-value]


class Monitor:
    """Records one or more state variables of a layer or connection every step.

    ``target`` is a layer name or a connection key (``"X->Ae"`` or a tuple).
    """

    LAYER_VARS = ("s", "v", "x", "u", "refrac_count", "theta")

    def __init__(self, target: str | ConnKey, variables: str | tuple[str, ...] = ("s",)) -> None:
        self.target = target
        self.variables = (variables,) if isinstance(variables, str) else tuple(variables)
        self._obj: Any = None
        self._buffers: dict[str, list[np.ndarray]] = {v: [] for v in self.variables}

    def attach(self, network: "Network") -> None:
        if isinstance(self.target, str) and self.target in network.layers:
            layer = network.layers[self.target]
            for var in self.variables:
                if var not in self.LAYER_VARS or getattr(layer.state, var, None) is None:
                    raise ValidationError(f"layer {self.target!r} has no variable {var!r}")
            self._obj = layer.state
        else:
            key = _conn_key(self.target)
            if key not in network.connections:
                raise ValidationError(f"unknown monitor target {self.target!r}")
            if self.variables != ("w",):
                raise ValidationError("connections only expose the variable 'w'")
            self._obj = network.connections[key]

    def record(self) -> None:
        for var, buf in self._buffers.items():
            buf.append(getattr(self._obj, var).copy())

    def get(self, var: str | None = None) -> np.ndarray:
        """Time-major array of shape (steps, ...) for ``var``."""
        var = var or self.variables[0]
        if var not in self._buffers:
            raise ValidationError(f"monitor does not record {var!r}")
        buf = self._buffers[var]
        if not buf:
            shape = getattr(self._obj, var).shape if self._obj is not None else (0,)
            return np.zeros((0, *shape))
        return np.stack(buf)

    def __len__(self) -> int:
        return len(self._buffers[self.variables[0]])

    def reset(self) -> None:
        for buf in self._buffers.values():
            buf.clear()


class Network:
    def __init__(self, dt: float = 1.0, seed: int | None = None, rng: np.random.Generator | None = None) -> None:
        if not dt > 0:
            raise ValidationError("dt must be positive")
        self.dt = float(dt)
        self.layers: dict[str, Nodes] = {}
        self.connections: dict[ConnKey, Connection] = {}
        self.monitors: dict[str, Monitor] = {}
        self.learning_enabled = True
        self._plan: list | None = None
        self.rng = rng if rng is not None else (make_rng(seed) if seed is not None else None)
        # Per-layer spike counts accumulated over the most recent run() call.
        self.spike_counts: dict[str, np.ndarray] = {}

    def add_layer(self, name: str, layer: Nodes) -> Nodes:
        if name in self.layers:
            raise ValidationError(f"duplicate layer name {name!r}")
        self.layers[name] = layer
        self._plan = None
        return layer

    def add_connection(self, conn: Connection) -> Connection:
        key = (conn.source, conn.target)
        for name, n, side in ((conn.source, conn.n_pre, "source"), (conn.target, conn.n_post, "target")):
            if name not in self.layers:
                raise ValidationError(f"unknown {side} layer {name!r}")
            if self.layers[name].n != n:
                raise DimensionError(f"{side} {name!r} has {self.layers[name].n} neurons, connection expects {n}")
        if key in self.connections:
            raise ValidationError(f"a connection {key[0]}->{key[1]} already exists")
        self.connections[key] = conn
        self._plan = None
        return conn

    def add_monitor(self, name: str, monitor: Monitor) -> Monitor:
        monitor.attach(self)
        self.monitors[name] = monitor
        return monitor

    def _incoming(self) -> dict[str, list[Connection]]:
        incoming: dict[str, list[Connection]] = {name: [] for name in self.layers}
        for conn in self.connections.values():
            incoming[conn.target].append(conn)
        return incoming

    def get_inputs(self, external: Mapping[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
        """Summed synaptic input per layer from current spikes, plus optional external input.

        Layers without inbound connections or external input receive zeros.
        """
        external = external or {}
        out = {}
        for name, conns in self._incoming().items():
            total = np.zeros(self.layers[name].n)
            for conn in conns:
                total = total + conn.compute(self.layers[conn.source].s)
            if name in external:
                total = total + external[name]
            out[name] = total
        return out

    def _prepare_inputs(self, inputs: Mapping[str, Any] | None, steps: int) -> dict[str, np.ndarray]:
        prepared = {}
        for name, value in (inputs or {}).items():
            if name not in self.layers:
                raise ValidationError(f"input for unknown layer {name!r}")
            layer = self.layers[name]
            if isinstance(value, SpikeTrain):
                if not isinstance(layer, Input):
                    raise ValidationError(f"spike trains can only drive Input layers, not {name!r}")
                value = value.data
            arr = np.asarray(value)
            if arr.ndim != 2 or arr.shape[0] != steps or arr.shape[1] != layer.n:
                raise DimensionError(f"input for {name!r} has shape {arr.shape}, expected ({steps}, {layer.n})")
            if isinstance(layer, Input):
                if arr.dtype != bool:
                    if not np.isin(arr, (0, 1)).all():
                        raise ValidationError(f"input spikes for {name!r} must be binary")
                    arr = arr.astype(bool)
            else:
                arr = arr.astype(np.float64)
                if not np.isfinite(arr).all():
                    raise NumericError(f"non-finite external input for layer {name!r}")
            prepared[name] = arr
        return prepared

    def _prepare_clamp(self, clamp: Mapping[str, Any] | None, steps: int) -> list[tuple[Nodes, np.ndarray]]:
        out = []
        for name, mask in (clamp or {}).items():
            if name not in self.layers:
                raise ValidationError(f"clamp for unknown layer {name!r}")
            layer = self.layers[name]
            mask = np.asarray(mask)
            if mask.dtype != bool:
                idx = mask.astype(int)
                mask = np.zeros(layer.n, dtype=bool)
                mask[idx] = True
            if mask.shape not in ((layer.n,), (steps, layer.n)):
                raise DimensionError(f"clamp mask for {name!r} has shape {mask.shape}")
            if mask.ndim == 1:
                mask = np.broadcast_to(mask, (steps, layer.n))
            out.append((layer, mask))
        return out

    def run(
        self,
        inputs: Mapping[str, Any] | None = None,
        time: float = 0.0,
        clamp: Mapping[str, Any] | None = None,
        reward: float | np.ndarray = 0.0,
    ) -> dict[str, np.ndarray]:
        """Simulate ``time / dt`` steps; return every monitor's full record.

        ``inputs`` maps layer names to arrays of shape (steps, n): spikes for
        Input layers, voltage increments otherwise. ``clamp`` maps layer names
        to boolean masks (or index lists) of neurons forced to spike each step.
        """
        dt = self.dt
        steps = steps_for(time, dt)
        ext = self._prepare_inputs(inputs, steps)
        clamps = self._prepare_clamp(clamp, steps)
        if np.ndim(reward) == 0:
            reward = float(reward)
            if not math.isfinite(reward):
                raise NumericError("non-finite reward")
            rewards = None
        else:
            rewards = np.broadcast_to(np.asarray(reward, dtype=np.float64), (steps,))
            if not np.isfinite(rewards).all():
                raise NumericError("non-finite reward")

        for conn in self.connections.values():
            conn.normalize()

        if self._plan is None:
            self._plan = self._build_plan()
        layer_plan, learners = self._plan
        plan = [(name, layer, sources, ext.get(name), is_input) for name, layer, sources, is_input in layer_plan]
        learning = self.learning_enabled and bool(learners)
        for layer in self.layers.values():
            if hasattr(layer, "adapting"):
                layer.adapting = self.learning_enabled
        monitors = list(self.monitors.values())
        counts = {name: np.zeros(layer.n, dtype=np.int64) for name, layer in self.layers.items()}
        count_list = [(counts[name], layer) for name, layer in self.layers.items()]

        for t in range(steps):
            gathered = []
            for name, layer, sources, external, is_input in plan:
                if is_input:
                    gathered.append(external[t] if external is not None else np.zeros(layer.n, dtype=bool))
                    continue
                total = None
                for conn, src in sources:
                    c = conn.compute(src.state.s)
                    total = c if total is None else total + c
                if external is not None:
                    total = external[t] if total is None else total + external[t]
                gathered.append(total if total is not None else np.zeros(layer.n))

            for (_, layer, _, _, _), value in zip(plan, gathered):
                layer.step(value, dt, False)

            for layer, mask in clamps:
                m = mask[t]
                layer.state.s = layer.state.s | m
                layer.state.x[m] = 1.0

            if learning:
                r = reward if rewards is None else rewards[t]
                for conn, pre, post in learners:
                    if conn.rule.update(pre, post, r, dt):
                        conn.clamp_weights()

            for c, layer in count_list:
                c += layer.state.s
            for mon in monitors:
                mon.record()

        self.spike_counts = counts
        # Non-finite voltages never recover (NaN compares false with every
        # threshold), so one check per run catches them.
        for name, layer in self.layers.items():
            v = layer.state.v
            if v is not None and not np.isfinite(v).all():
                raise NumericError(f"non-finite voltage in layer {name!r}")
        return {name: mon.get() for name, mon in self.monitors.items()}

    def _build_plan(self) -> tuple[list, list]:
        incoming = self._incoming()
        layer_plan = [
            (name, layer, [(conn, self.layers[conn.source]) for conn in incoming[name]], isinstance(layer, Input))
            for name, layer in self.layers.items()
        ]
        learners = [
            (conn, self.layers[conn.source], self.layers[conn.target])
            for conn in self.connections.values()
            if conn.rule is not None
        ]
        return layer_plan, learners

    def reset(self) -> None:
        """Reset state variables, plasticity traces and monitors; weights are kept."""
        for layer in self.layers.values():
            layer.reset()
        for conn in self.connections.values():
            if conn.rule is not None:
                conn.rule.reset()
        for mon in self.monitors.values():
            mon.reset()
        self.spike_counts = {}

    def save(self, path) -> None:
        from .serialization import save_network

        save_network(self, path)

    @staticmethod
    def load(path) -> "Network":
        from .serialization import load_network

        return load_network(path)

    def __repr__(self) -> str:
        return f"Network(dt={self.dt}, layers={list(self.layers)}, connections={[f'{s}->{t}' for s, t in self.connections]})"

