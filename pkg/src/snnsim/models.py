"""Prebuilt networks: Diehl & Cook (2015) style competitive STDP, a spiking reservoir and an RL agent.

The Diehl & Cook network is simplified: STDP has no weight dependence and the
adaptive threshold is off unless ``theta_plus > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .network import Network
from .neurons import AdaptiveLIFNodes, Input, LIFNodes, NeuronParams
from .plasticity import MSTDPET, PostPre
from .topology import DenseConnection


def _exc_params() -> NeuronParams:
    return NeuronParams(v_rest=-65.0, v_reset=-60.0, v_thresh=-52.0, tau_m=100.0, refrac=5.0, trace_tau=20.0)


def _inh_params() -> NeuronParams:
    return NeuronParams(v_rest=-60.0, v_reset=-45.0, v_thresh=-40.0, tau_m=10.0, refrac=2.0, trace_tau=20.0)


@dataclass
class DiehlCookConfig:
    n_input: int = 784
    n_neurons: int = 100
    exc_strength: float = 22.5
    inh_strength: float = 17.5
    lr_pre: float = 1e-4
    lr_post: float = 1e-2
    norm: float | None = 78.4
    wmax: float = 1.0
    init_max: float = 0.3
    theta_plus: float = 0.0
    tau_theta: float = 1e7
    dt: float = 1.0
    exc: NeuronParams = field(default_factory=_exc_params)
    inh: NeuronParams = field(default_factory=_inh_params)

    def __post_init__(self) -> None:
        if self.n_neurons < 1 or self.n_input < 1:
            raise ValidationError("n_neurons and n_input must be >= 1")
        if not (self.exc_strength > 0 and self.inh_strength > 0):
            raise ValidationError("exc_strength and inh_strength must be positive")


def build_diehl_cook(cfg: DiehlCookConfig, rng: np.random.Generator) -> Network:
    """Input ``X`` -> excitatory ``Ae`` (STDP) <-> inhibitory ``Ai``.

    Each excitatory neuron drives its own inhibitory partner, which inhibits
    every other excitatory neuron.
    """
    n = cfg.n_neurons
    net = Network(dt=cfg.dt, rng=rng)
    net.add_layer("X", Input(cfg.n_input, trace_tau=cfg.exc.trace_tau))
    if cfg.theta_plus > 0:
        net.add_layer("Ae", AdaptiveLIFNodes(n, cfg.exc, theta_plus=cfg.theta_plus, tau_theta=cfg.tau_theta))
    else:
        net.add_layer("Ae", LIFNodes(n, cfg.exc))
    net.add_layer("Ai", LIFNodes(n, cfg.inh))
    w = cfg.init_max * rng.random((cfg.n_input, n))
    net.add_connection(DenseConnection(
        "X", "Ae", w, wmin=0.0, wmax=cfg.wmax, norm=cfg.norm,
        rule=PostPre(lr_pre=cfg.lr_pre, lr_post=cfg.lr_post),
    ))
    net.add_connection(DenseConnection("Ae", "Ai", cfg.exc_strength * np.eye(n)))
    net.add_connection(DenseConnection("Ai", "Ae", -cfg.inh_strength * (np.ones((n, n)) - np.eye(n))))
    return net


def label_groups(n_neurons: int, class_count: int) -> dict[int, np.ndarray]:
    if class_count < 1 or n_neurons % class_count:
        raise ValidationError(f"{n_neurons} neurons cannot be split into {class_count} equal groups")
    size = n_neurons // class_count
    return {c: np.arange(c * size, (c + 1) * size) for c in range(class_count)}


def build_supervised_diehl_cook(cfg: DiehlCookConfig, class_count: int, rng: np.random.Generator) -> tuple[Network, dict[int, np.ndarray]]:
    groups = label_groups(cfg.n_neurons, class_count)
    return build_diehl_cook(cfg, rng), groups


def group_assignment_labels(groups: dict[int, np.ndarray], n_neurons: int) -> np.ndarray:
    labels = np.full(n_neurons, -1)
    for c, idx in groups.items():
        labels[idx] = c
    return labels


@dataclass
class ReservoirConfig:
    n_input: int = 784
    n_reservoir: int = 625
    input_mean: float = 0.0
    input_std: float = 1.0
    recurrent_mean: float = 0.0
    recurrent_std: float = 0.5
    thresh_mean: float = -52.0
    thresh_std: float = 1.0
    dt: float = 1.0
    v_rest: float = -65.0
    v_reset: float = -65.0
    tau_m: float = 100.0
    refrac: float = 5.0

    def __post_init__(self) -> None:
        if self.n_reservoir < 1 or self.n_input < 1:
            raise ValidationError("n_reservoir and n_input must be >= 1")


def build_reservoir(cfg: ReservoirConfig, rng: np.random.Generator) -> Network:
    """Input ``input`` all-to-all onto a recurrent LIF ``output`` layer, no plasticity.

    Draw order: input weights, recurrent weights, thresholds.
    """
    n = cfg.n_reservoir
    w_in = rng.normal(cfg.input_mean, cfg.input_std, (cfg.n_input, n))
    w_rec = rng.normal(cfg.recurrent_mean, cfg.recurrent_std, (n, n))
    thresh = rng.normal(cfg.thresh_mean, cfg.thresh_std, n)
    # A drawn threshold below the reset voltage would fire forever; clip to the reset value.
    thresh = np.maximum(thresh, cfg.v_reset)
    net = Network(dt=cfg.dt, rng=rng)
    net.add_layer("input", Input(cfg.n_input))
    net.add_layer("output", LIFNodes(n, NeuronParams(
        v_rest=cfg.v_rest, v_reset=cfg.v_reset, v_thresh=thresh, tau_m=cfg.tau_m, refrac=cfg.refrac,
    )))
    net.add_connection(DenseConnection("input", "output", w_in))
    net.add_connection(DenseConnection("output", "output", w_rec))
    return net


@dataclass
class RLConfig:
    """Input -> hidden LIF -> output LIF agent trained online with ``m_stdp_et``.

    Each input cell drives a sparse random set of hidden neurons strongly enough
    to fire them. The output layer holds ``n_actions`` groups of
    ``per_action`` neurons that inhibit the other groups, so one group tends to
    win each window.
    """

    n_input: int = 64
    n_hidden: int = 64
    n_actions: int = 4
    per_action: int = 4
    hidden_density: float = 0.1
    w_in_low: float = 15.0
    w_in_high: float = 20.0
    w_in_max: float = 30.0
    w_out_init: float = 2.0
    w_out_max: float = 4.0
    lateral_inhibition: float = 20.0
    tau_m: float = 2.0
    refrac: float = 1.0
    gamma: float = 0.1
    tau_e: float = 25.0
    dt: float = 1.0

    def __post_init__(self) -> None:
        if min(self.n_input, self.n_hidden, self.n_actions, self.per_action) < 1:
            raise ValidationError("layer sizes must be >= 1")
        if not 0 < self.hidden_density <= 1:
            raise ValidationError("hidden_density must be in (0, 1]")
        if self.lateral_inhibition < 0:
            raise ValidationError("lateral_inhibition must be non-negative")


def build_rl_network(cfg: RLConfig, rng: np.random.Generator) -> Network:
    """Layers ``X`` (input), ``H`` (hidden) and ``Y`` (output, grouped by action).

    Draw order: input weights, input connectivity mask, output weights.
    """
    params = NeuronParams(v_rest=-65.0, v_reset=-65.0, v_thresh=-52.0, tau_m=cfg.tau_m, refrac=cfg.refrac)
    n_out = cfg.n_actions * cfg.per_action
    w_in = rng.uniform(cfg.w_in_low, cfg.w_in_high, (cfg.n_input, cfg.n_hidden))
    w_in *= rng.random((cfg.n_input, cfg.n_hidden)) < cfg.hidden_density
    w_out = rng.uniform(0.0, cfg.w_out_init, (cfg.n_hidden, n_out))
    rule = dict(gamma=cfg.gamma, tau_e=cfg.tau_e)
    net = Network(dt=cfg.dt, rng=rng)
    net.add_layer("X", Input(cfg.n_input))
    net.add_layer("H", LIFNodes(cfg.n_hidden, params))
    net.add_layer("Y", LIFNodes(n_out, params))
    net.add_connection(DenseConnection("X", "H", w_in, wmin=0.0, wmax=cfg.w_in_max, rule=MSTDPET(**rule)))
    net.add_connection(DenseConnection("H", "Y", w_out, wmin=0.0, wmax=cfg.w_out_max, rule=MSTDPET(**rule)))
    if cfg.lateral_inhibition > 0 and cfg.n_actions > 1:
        group = np.repeat(np.arange(cfg.n_actions), cfg.per_action)
        net.add_connection(DenseConnection("Y", "Y", -cfg.lateral_inhibition * (group[:, None] != group[None, :])))
    return net
