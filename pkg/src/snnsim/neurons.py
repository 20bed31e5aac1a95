"""Neuron models as stateful layers with a uniform ``step``/``reset`` contract.

Voltages are in mV and times in ms. Each step first decays the membrane
potential exactly (``exp(-dt/tau_m)``), then adds the input as a direct
voltage increment, then compares against threshold with ``>=``. Spike traces
decay exponentially and are set to 1 on a spike.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .errors import DimensionError, NumericError, ValidationError

ArrayLike = float | np.ndarray


@dataclass
class NeuronParams:
    """Parameters of (leaky) integrate-and-fire neurons.

    ``v_thresh`` and ``v_reset`` may be per-neuron arrays.
    """

    v_rest: float = -65.0
    v_reset: ArrayLike = -65.0
    v_thresh: ArrayLike = -52.0
    tau_m: float = 100.0
    refrac: float = 5.0
    trace_tau: float = 20.0

    def __post_init__(self) -> None:
        if not self.tau_m > 0 or not self.trace_tau > 0:
            raise ValidationError("tau_m and trace_tau must be positive")
        if not self.refrac >= 0:
            raise ValidationError("refrac must be non-negative")
        if np.any(np.asarray(self.v_reset) > np.asarray(self.v_thresh)):
            raise ValidationError("v_reset must not exceed v_thresh")


@dataclass
class IzhikevichParams:
    a: float = 0.02
    b: float = 0.2
    c: float = -65.0
    d: float = 8.0
    spike_cutoff: float = 30.0
    v_rest: float = -65.0
    trace_tau: float = 20.0

    def __post_init__(self) -> None:
        if not self.spike_cutoff > self.c:
            raise ValidationError("spike_cutoff must exceed the reset voltage c")
        if not self.trace_tau > 0:
            raise ValidationError("trace_tau must be positive")


@dataclass
class LayerState:
    """Per-layer state arrays. ``v`` and ``u`` are ``None`` for models without them."""

    n: int
    s: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    refrac_count: np.ndarray = field(repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    u: np.ndarray | None = field(default=None, repr=False)
    theta: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def empty(cls, n: int, with_v: bool = True, with_u: bool = False, with_theta: bool = False) -> "LayerState":
        return cls(
            n=n,
            s=np.zeros(n, dtype=bool),
            x=np.zeros(n),
            refrac_count=np.zeros(n),
            v=np.zeros(n) if with_v else None,
            u=np.zeros(n) if with_u else None,
            theta=np.zeros(n) if with_theta else None,
        )

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"s": self.s, "x": self.x, "refrac_count": self.refrac_count}
        for name in ("v", "u", "theta"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


def _check_input(inputs: np.ndarray, n: int) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape != (n,):
        raise DimensionError(f"input shape {inputs.shape} does not match layer size {n}")
    if not np.isfinite(inputs).all():
        raise NumericError("non-finite values in layer input")
    return inputs


def _update_trace(state: LayerState, trace_tau: float, dt: float) -> None:
    state.x *= math.exp(-dt / trace_tau)
    # Decayed traces are below 1, so the max sets spiking neurons to exactly 1.
    np.maximum(state.x, state.s, out=state.x)


def _integrate_and_fire(
    state: LayerState, params: NeuronParams, inputs: np.ndarray, dt: float, leak: bool,
    thresh: ArrayLike | None = None, check: bool = True,
) -> LayerState:
    if check:
        if not dt > 0:
            raise ValidationError("dt must be positive")
        inputs = _check_input(inputs, state.n)
    v = state.v
    if leak:
        decay = math.exp(-dt / params.tau_m)
        v *= decay
        v += params.v_rest * (1.0 - decay)

    if thresh is None:
        thresh = params.v_thresh
    rc = state.refrac_count
    refractory = rc > 0
    if refractory.any():
        free = ~refractory
        np.add(v, inputs, out=v, where=free)
        s = v >= thresh
        s &= free
        # Counters of free neurons are 0 and stay 0 under max(rc - dt, 0).
        np.subtract(rc, dt, out=rc)
        np.maximum(rc, 0.0, out=rc)
    else:
        v += inputs
        s = v >= thresh

    if s.any():
        np.copyto(v, params.v_reset, where=s)
        np.copyto(rc, params.refrac, where=s)
    state.s = s
    _update_trace(state, params.trace_tau, dt)
    return state


def lif_step(state: LayerState, params: NeuronParams, inputs: np.ndarray, dt: float, check: bool = True) -> LayerState:
    """Advance a leaky integrate-and-fire layer by one step (in place).

    ``check=False`` skips input validation for callers that already did it.
    """
    return _integrate_and_fire(state, params, inputs, dt, leak=True, check=check)


def if_step(state: LayerState, params: NeuronParams, inputs: np.ndarray, dt: float, check: bool = True) -> LayerState:
    """As :func:`lif_step` without the leak term."""
    return _integrate_and_fire(state, params, inputs, dt, leak=False, check=check)


def izhikevich_step(state: LayerState, params: IzhikevichParams, inputs: np.ndarray, dt: float, check: bool = True) -> LayerState:
    """Forward-Euler step of the Izhikevich (2003) model."""
    if check:
        if not dt > 0:
            raise ValidationError("dt must be positive")
        inputs = _check_input(inputs, state.n)
    v_prev = state.v.copy()
    v, u = state.v, state.u
    v += dt * (0.04 * v_prev * v_prev + 5.0 * v_prev + 140.0 - u + inputs)
    u += dt * params.a * (params.b * v_prev - u)
    s = v >= params.spike_cutoff
    if s.any():
        v[s] = params.c
        u[s] += params.d
    state.s = s
    _update_trace(state, params.trace_tau, dt)
    return state


def mcculloch_pitts_step(
    state: LayerState, threshold: float, inputs: np.ndarray, dt: float, trace_tau: float = 20.0, check: bool = True
) -> LayerState:
    if check:
        inputs = _check_input(inputs, state.n)
    state.s = inputs >= threshold
    _update_trace(state, trace_tau, dt)
    return state


def input_step(state: LayerState, spikes: np.ndarray, dt: float, trace_tau: float = 20.0) -> LayerState:
    spikes = np.asarray(spikes)
    if spikes.shape != (state.n,):
        raise DimensionError(f"spike shape {spikes.shape} does not match layer size {state.n}")
    if spikes.dtype != bool:
        if not np.isin(spikes, (0, 1)).all():
            raise ValidationError("input spikes must be binary")
        spikes = spikes.astype(bool)
    state.s = spikes.copy()
    _update_trace(state, trace_tau, dt)
    return state


def reset_layer(state: LayerState, v_rest: float = -65.0, b: float | None = None) -> LayerState:
    """Return ``state`` to rest: no spikes, zero traces and refractory counters."""
    state.s = np.zeros(state.n, dtype=bool)
    state.x[:] = 0.0
    state.refrac_count[:] = 0.0
    if state.v is not None:
        state.v[:] = v_rest
    if state.u is not None:
        state.u[:] = (b if b is not None else 0.0) * v_rest
    return state


class Nodes(ABC):
    """A layer of neurons owning its :class:`LayerState`."""

    kind: str = ""

    def __init__(self, n: int) -> None:
        if n < 0:
            raise ValidationError("layer size must be non-negative")
        self.n = int(n)

    @abstractmethod
    def step(self, inputs: np.ndarray, dt: float, check: bool = True) -> None:
        """Advance one step; ``check=False`` trusts ``inputs`` to be valid."""

    @abstractmethod
    def reset(self) -> None: ...

    @abstractmethod
    def params_dict(self) -> dict[str, Any]:
        """Scalar parameters for serialization; array parameters go in :meth:`param_arrays`."""

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {}

    @property
    def s(self) -> np.ndarray:
        return self.state.s

    @property
    def x(self) -> np.ndarray:
        return self.state.x

    @property
    def v(self) -> np.ndarray | None:
        return self.state.v

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n})"


class Input(Nodes):
    """Neurons whose spikes are supplied from outside the network."""

    kind = "input"

    def __init__(self, n: int, trace_tau: float = 20.0) -> None:
        super().__init__(n)
        self.trace_tau = float(trace_tau)
        self.state = LayerState.empty(self.n, with_v=False)

    def step(self, inputs: np.ndarray, dt: float, check: bool = True) -> None:
        if check:
            input_step(self.state, inputs, dt, self.trace_tau)
        else:
            self.state.s = inputs.copy()
            _update_trace(self.state, self.trace_tau, dt)

    def reset(self) -> None:
        reset_layer(self.state)

    def params_dict(self) -> dict[str, Any]:
        return {"trace_tau": self.trace_tau}


class McCullochPittsNodes(Nodes):
    kind = "mcculloch_pitts"

    def __init__(self, n: int, threshold: float = 1.0, trace_tau: float = 20.0) -> None:
        super().__init__(n)
        self.threshold = float(threshold)
        self.trace_tau = float(trace_tau)
        self.state = LayerState.empty(self.n, with_v=False)

    def step(self, inputs: np.ndarray, dt: float, check: bool = True) -> None:
        mcculloch_pitts_step(self.state, self.threshold, inputs, dt, self.trace_tau, check)

    def reset(self) -> None:
        reset_layer(self.state)

    def params_dict(self) -> dict[str, Any]:
        return {"threshold": self.threshold, "trace_tau": self.trace_tau}


class _ThresholdNodes(Nodes):
    _step = staticmethod(lif_step)

    def __init__(self, n: int, params: NeuronParams | None = None, **kwargs: Any) -> None:
        super().__init__(n)
        self.params = params if params is not None else NeuronParams(**kwargs)
        for name in ("v_thresh", "v_reset"):
            value = getattr(self.params, name)
            if isinstance(value, np.ndarray) and value.shape != (self.n,):
                raise DimensionError(f"{name} has shape {value.shape}, expected ({self.n},)")
        self.state = LayerState.empty(self.n)
        self.reset()

    def step(self, inputs: np.ndarray, dt: float, check: bool = True) -> None:
        self._step(self.state, self.params, inputs, dt, check)

    def reset(self) -> None:
        reset_layer(self.state, self.params.v_rest)

    def params_dict(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self.params).items() if not isinstance(v, np.ndarray)}

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in asdict(self.params).items() if isinstance(v, np.ndarray)}


class LIFNodes(_ThresholdNodes):
    """Leaky integrate-and-fire neurons."""

    kind = "lif"
    _step = staticmethod(lif_step)


class AdaptiveLIFNodes(LIFNodes):
    """LIF neurons whose threshold rises by ``theta_plus`` per spike.

    The offset ``theta`` decays with ``tau_theta``, survives :meth:`reset`, and
    only adapts while ``adapting`` is true (the network mirrors its learning flag here).
    """

    kind = "adaptive_lif"

    def __init__(self, n: int, params: NeuronParams | None = None, theta_plus: float = 0.05,
                 tau_theta: float = 1e7, **kwargs: Any) -> None:
        if theta_plus < 0 or not tau_theta > 0:
            raise ValidationError("theta_plus must be >= 0 and tau_theta > 0")
        self.theta_plus = float(theta_plus)
        self.tau_theta = float(tau_theta)
        self.adapting = True
        super().__init__(n, params, **kwargs)
        self.state.theta = np.zeros(self.n)

    def step(self, inputs: np.ndarray, dt: float, check: bool = True) -> None:
        theta = self.state.theta
        _integrate_and_fire(self.state, self.params, inputs, dt, leak=True, thresh=self.params.v_thresh + theta, check=check)
        if self.adapting:
            theta *= math.exp(-dt / self.tau_theta)
            theta[self.state.s] += self.theta_plus

    def params_dict(self) -> dict[str, Any]:
        return {**super().params_dict(), "theta_plus": self.theta_plus, "tau_theta": self.tau_theta}


class IFNodes(_ThresholdNodes):
    """Integrate-and-fire neurons: voltage persists absent input."""

    kind = "if"
    _step = staticmethod(if_step)


class IzhikevichNodes(Nodes):
    kind = "izhikevich"

    def __init__(self, n: int, params: IzhikevichParams | None = None, **kwargs: Any) -> None:
        super().__init__(n)
        self.params = params if params is not None else IzhikevichParams(**kwargs)
        self.state = LayerState.empty(self.n, with_u=True)
        self.reset()

    def step(self, inputs: np.ndarray, dt: float, check: bool = True) -> None:
        izhikevich_step(self.state, self.params, inputs, dt, check)

    def reset(self) -> None:
        reset_layer(self.state, self.params.v_rest, self.params.b)

    def params_dict(self) -> dict[str, Any]:
        return asdict(self.params)


NODE_TYPES: dict[str, type[Nodes]] = {
    cls.kind: cls for cls in (Input, McCullochPittsNodes, IFNodes, LIFNodes, AdaptiveLIFNodes, IzhikevichNodes)
}


def build_nodes(kind: str, n: int, params: dict[str, Any], arrays: dict[str, np.ndarray] | None = None) -> Nodes:
    """Reconstruct a layer from its serialized description."""
    try:
        cls = NODE_TYPES[kind]
    except KeyError:
        raise ValidationError(f"unknown layer type {kind!r}") from None
    merged = dict(params)
    merged.update(arrays or {})
    if cls is AdaptiveLIFNodes:
        extra = {k: merged.pop(k) for k in ("theta_plus", "tau_theta")}
        return cls(n, NeuronParams(**merged), **extra)
    if cls in (LIFNodes, IFNodes):
        return cls(n, NeuronParams(**merged))
    if cls is IzhikevichNodes:
        return cls(n, IzhikevichParams(**merged))
    return cls(n, **merged)
