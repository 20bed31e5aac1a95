import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snnsim.encoding import poisson_encode
from snnsim.errors import DimensionError, NumericError, ValidationError
from snnsim.network import Monitor, Network, steps_for
from snnsim.neurons import AdaptiveLIFNodes, IFNodes, Input, LIFNodes, NeuronParams
from snnsim.plasticity import MSTDPET, PostPre
from snnsim.rng import make_rng
from snnsim.serialization import network_from_bytes, network_to_bytes
from snnsim.topology import ConvConnection, DenseConnection, SparseConnection

FAST = NeuronParams(v_rest=0.0, v_reset=0.0, v_thresh=1.0, tau_m=1e9, refrac=0.0)


def chain():
    net = Network(dt=1.0)
    net.add_layer("in", Input(1))
    net.add_layer("h", IFNodes(1, FAST))
    net.add_layer("out", IFNodes(1, FAST))
    net.add_connection(DenseConnection("in", "h", [[2.0]]))
    net.add_connection(DenseConnection("h", "out", [[2.0]]))
    for name in ("in", "h", "out"):
        net.add_monitor(name, Monitor(name))
    return net


def test_one_step_delay_per_connection():
    net = chain()
    spikes = np.zeros((6, 1), dtype=bool)
    spikes[1] = True
    rec = net.run({"in": spikes}, time=6)
    assert np.flatnonzero(rec["in"][:, 0]).tolist() == [1]
    assert np.flatnonzero(rec["h"][:, 0]).tolist() == [2]
    assert np.flatnonzero(rec["out"][:, 0]).tolist() == [3]


def test_layer_order_does_not_matter():
    net = Network()
    net.add_layer("out", IFNodes(1, FAST))
    net.add_layer("h", IFNodes(1, FAST))
    net.add_layer("in", Input(1))
    net.add_connection(DenseConnection("h", "out", [[2.0]]))
    net.add_connection(DenseConnection("in", "h", [[2.0]]))
    net.add_monitor("out", Monitor("out"))
    spikes = np.zeros((6, 1), dtype=bool)
    spikes[1] = True
    assert np.flatnonzero(net.run({"in": spikes}, time=6)["out"][:, 0]).tolist() == [3]


def test_monitor_shapes_and_voltage_record():
    net = chain()
    net.add_monitor("hv", Monitor("h", ("v", "s")))
    net.run({"in": np.ones((7, 1), dtype=bool)}, time=7)
    assert net.monitors["hv"].get("v").shape == (7, 1)
    assert net.monitors["hv"].get("s").dtype == bool
    assert len(net.monitors["hv"]) == 7
    with pytest.raises(ValidationError):
        net.add_monitor("bad", Monitor("in", "v"))
    with pytest.raises(ValidationError):
        net.add_monitor("bad", Monitor("nope"))


def test_weight_monitor_tracks_learning():
    net = Network()
    net.add_layer("a", Input(2))
    net.add_layer("b", Input(2))
    net.add_connection(DenseConnection("a", "b", np.full((2, 2), 0.5), rule=PostPre(0.0, 0.1)))
    mon = net.add_monitor("w", Monitor("a->b", "w"))
    net.run({"a": np.ones((3, 2), bool), "b": np.ones((3, 2), bool)}, time=3)
    w = mon.get()
    assert w.shape == (3, 2, 2) and w[0, 0, 0] < w[1, 0, 0] <= w[2, 0, 0]


def test_spike_counts_and_reset():
    net = chain()
    net.run({"in": np.ones((5, 1), dtype=bool)}, time=5)
    assert net.spike_counts["in"].tolist() == [5]
    assert net.spike_counts["h"].tolist() == [4]
    w = net.connections[("in", "h")].w.copy()
    net.reset()
    assert net.spike_counts == {}
    assert len(net.monitors["in"]) == 0
    assert net.layers["h"].v[0] == 0.0
    assert np.array_equal(net.connections[("in", "h")].w, w)


def test_clamp_forces_spikes():
    net = Network()
    net.add_layer("a", LIFNodes(4))
    net.add_monitor("a", Monitor("a"))
    rec = net.run(time=3, clamp={"a": [1, 3]})
    assert rec["a"].sum(axis=0).tolist() == [0, 3, 0, 3]
    assert net.layers["a"].x[1] == 1.0
    with pytest.raises(DimensionError):
        net.run(time=3, clamp={"a": np.ones(5, bool)})
    with pytest.raises(ValidationError):
        net.run(time=3, clamp={"zzz": [0]})


def test_learning_disabled_freezes_weights(rng):
    net = Network(rng=rng)
    net.add_layer("a", Input(5))
    net.add_layer("b", LIFNodes(3))
    net.add_connection(DenseConnection("a", "b", rng.random((5, 3)) * 20, wmax=30, rule=PostPre()))
    net.learning_enabled = False
    w = net.connections[("a", "b")].w.copy()
    net.run({"a": rng.random((50, 5)) < 0.5}, time=50)
    assert np.array_equal(net.connections[("a", "b")].w, w)


def test_gamma_zero_matches_learning_disabled(rng):
    def run(gamma, learning):
        net = Network(rng=make_rng(3))
        net.add_layer("a", Input(6))
        net.add_layer("b", LIFNodes(4, NeuronParams(refrac=0.0)))
        net.add_connection(DenseConnection("a", "b", np.full((6, 4), 6.0), wmax=30, rule=MSTDPET(gamma=gamma)))
        net.learning_enabled = learning
        net.add_monitor("b", Monitor("b"))
        spikes = make_rng(9).random((80, 6)) < 0.4
        return net.run({"a": spikes}, time=80, reward=1.0)["b"], net.connections[("a", "b")].w

    s0, w0 = run(0.0, True)
    s1, w1 = run(0.25, False)
    assert np.array_equal(s0, s1) and np.array_equal(w0, w1)


@given(st.integers(0, 10_000))
def test_normalization_applied_at_run_start(seed):
    rng = make_rng(seed)
    net = Network(rng=rng)
    n_pre, n_post = int(rng.integers(1, 30)), int(rng.integers(1, 30))
    net.add_layer("a", Input(n_pre))
    net.add_layer("b", LIFNodes(n_post))
    w = rng.random((n_pre, n_post)) * (rng.random((n_pre, n_post)) < 0.7)
    norm = float(rng.uniform(0.5, 50))
    conn = net.add_connection(DenseConnection("a", "b", w, norm=norm))
    net.run(time=0)
    sums = np.abs(conn.w).sum(axis=0)
    nz = np.abs(w).sum(axis=0) > 0
    assert np.all(np.abs(sums[nz] - norm) <= 1e-6)


def test_external_input_to_non_input_layer():
    net = Network()
    net.add_layer("a", IFNodes(2, FAST))
    net.add_monitor("a", Monitor("a"))
    rec = net.run({"a": np.array([[0.5, 1.0], [0.6, 0.0]])}, time=2)
    assert rec["a"].tolist() == [[False, True], [True, False]]
    with pytest.raises(NumericError):
        net.run({"a": np.array([[np.nan, 0.0]])}, time=1)


def test_input_validation():
    net = chain()
    with pytest.raises(DimensionError):
        net.run({"in": np.ones((4, 1), bool)}, time=5)
    with pytest.raises(ValidationError):
        net.run({"nope": np.ones((5, 1), bool)}, time=5)
    with pytest.raises(ValidationError):
        net.run({"in": np.full((5, 1), 2)}, time=5)
    with pytest.raises(ValidationError):
        net.run(time=2.5)
    with pytest.raises(NumericError):
        net.run(time=1, reward=np.nan)
    with pytest.raises(ValidationError):
        net.add_layer("in", Input(1))
    with pytest.raises(DimensionError):
        net.add_connection(DenseConnection("in", "h", np.ones((2, 1))))
    with pytest.raises(ValidationError):
        net.add_connection(DenseConnection("in", "h", np.ones((1, 1))))
    with pytest.raises(ValidationError):
        Network(dt=0)


def test_steps_for():
    assert steps_for(350, 1.0) == 350
    assert steps_for(1.5, 0.5) == 3
    with pytest.raises(ValidationError):
        steps_for(1.0, 0.3)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_voltage_raises():
    net = Network()
    net.add_layer("a", Input(1))
    net.add_layer("b", LIFNodes(1))
    net.add_connection(DenseConnection("a", "b", [[np.inf]]))
    net.add_connection(DenseConnection("b", "b", [[-np.inf]]))
    with pytest.raises(NumericError, match="'b'"):
        net.run({"a": np.ones((3, 1), bool)}, time=3)


def test_array_reward_per_step(rng):
    net = Network(rng=rng)
    net.add_layer("a", Input(3))
    net.add_layer("b", Input(3))
    conn = net.add_connection(DenseConnection("a", "b", np.full((3, 3), 0.5), rule=MSTDPET(gamma=0.1)))
    # Pre leads post, so the eligibility is positive (simultaneous spikes would cancel).
    pre = np.array([[1, 1, 1], [0, 0, 0], [0, 0, 0], [0, 0, 0]], bool)
    post = np.roll(pre, 1, axis=0)
    net.run({"a": pre, "b": post}, time=4, reward=np.array([0.0, 0.0, 0.0, 0.0]))
    assert np.all(conn.w == 0.5)
    net.run({"a": pre, "b": post}, time=4, reward=np.array([0.0, 0.0, 0.0, 1.0]))
    assert not np.all(conn.w == 0.5)


def build_mixed(seed):
    rng = make_rng(seed)
    net = Network(dt=1.0, rng=rng)
    net.add_layer("X", Input(16))
    net.add_layer("E", AdaptiveLIFNodes(8, NeuronParams(refrac=2.0), theta_plus=0.2))
    net.add_layer("C", LIFNodes(2 * 3 * 3, NeuronParams(refrac=1.0)))
    net.add_layer("S", LIFNodes(5))
    net.add_connection(DenseConnection("X", "E", rng.random((16, 8)) * 6, wmax=8.0, norm=30.0, rule=PostPre(1e-3, 1e-2)))
    net.add_connection(ConvConnection("X", "C", rng.random((2, 1, 2, 2)) * 8, input_shape=(1, 4, 4), stride=1,
                                      wmax=10.0, rule=MSTDPET(gamma=0.2)))
    net.add_connection(SparseConnection("E", "S", rng.random((8, 5)) * 9, mask=rng.random((8, 5)) < 0.5,
                                        wmax=12.0, rule=MSTDPET()))
    net.add_connection(DenseConnection("E", "E", -2.0 * (1 - np.eye(8))))
    for name in net.layers:
        net.add_monitor(name, Monitor(name))
    return net


def drive(net, steps):
    for mon in net.monitors.values():
        mon.reset()
    x = poisson_encode(np.linspace(0, 1, 16), steps, 1.0, 400.0, rng=net.rng)
    net.run({"X": x}, time=steps, reward=0.5)
    return {k: v.copy() for k, v in ((n, m.get()) for n, m in net.monitors.items())}


def test_save_load_continue_is_bitwise_identical():
    uninterrupted = build_mixed(5)
    drive(uninterrupted, 60)
    tail_a = drive(uninterrupted, 60)

    first = build_mixed(5)
    drive(first, 60)
    restored = network_from_bytes(network_to_bytes(first))
    for name in restored.layers:
        restored.add_monitor(name, Monitor(name))
    tail_b = drive(restored, 60)
    for name in tail_a:
        assert np.array_equal(tail_a[name], tail_b[name]), name
    for key, conn in uninterrupted.connections.items():
        assert np.array_equal(conn.w, restored.connections[key].w)
