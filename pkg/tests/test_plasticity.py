import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snnsim.errors import NumericError, ValidationError
from snnsim.network import Network
from snnsim.neurons import Input
from snnsim.plasticity import (
    MSTDP,
    MSTDPET,
    Hebbian,
    MstdpState,
    PostPre,
    build_rule,
    hebbian_update,
    mstdp_et_update,
    mstdp_update,
    post_pre_update,
)
from snnsim.topology import ConvConnection, DenseConnection, SparseConnection


def pair_network(rule, n_pre=1, n_post=1, w=0.5):
    net = Network(dt=1.0)
    net.add_layer("pre", Input(n_pre, trace_tau=20.0))
    net.add_layer("post", Input(n_post, trace_tau=20.0))
    conn = net.add_connection(DenseConnection("pre", "post", np.full((n_pre, n_post), w), wmin=-10, wmax=10, rule=rule))
    return net, conn


def spikes_at(steps, n, times):
    s = np.zeros((steps, n), dtype=bool)
    for t in times:
        s[t] = True
    return s


@pytest.mark.parametrize("lag", [1, 5, 12])
def test_pre_then_post_potentiates_by_trace(lag):
    net, conn = pair_network(PostPre(lr_pre=1e-4, lr_post=1e-2))
    net.run({"pre": spikes_at(30, 1, [3]), "post": spikes_at(30, 1, [3 + lag])}, time=30)
    assert conn.w[0, 0] - 0.5 == pytest.approx(1e-2 * math.exp(-lag / 20.0), abs=1e-9)


@pytest.mark.parametrize("lag", [1, 5, 12])
def test_post_then_pre_depresses_by_trace(lag):
    net, conn = pair_network(PostPre(lr_pre=1e-4, lr_post=1e-2))
    net.run({"pre": spikes_at(30, 1, [3 + lag]), "post": spikes_at(30, 1, [3])}, time=30)
    assert conn.w[0, 0] - 0.5 == pytest.approx(-1e-4 * math.exp(-lag / 20.0), abs=1e-9)


def test_hebbian_potentiates_both_orders():
    net, conn = pair_network(Hebbian(lr_pre=1e-3, lr_post=1e-2))
    net.run({"pre": spikes_at(30, 1, [3, 20]), "post": spikes_at(30, 1, [8])}, time=30)
    expected = 1e-2 * math.exp(-5 / 20) + 1e-3 * math.exp(-12 / 20)
    assert conn.w[0, 0] - 0.5 == pytest.approx(expected, abs=1e-9)


def test_simultaneous_spikes_use_both_terms():
    # Both traces are 1 at the shared step: lr_post potentiation and lr_pre depression.
    net, conn = pair_network(PostPre(lr_pre=1e-3, lr_post=1e-2))
    net.run({"pre": spikes_at(5, 1, [2]), "post": spikes_at(5, 1, [2])}, time=5)
    assert conn.w[0, 0] - 0.5 == pytest.approx(1e-2 - 1e-3, abs=1e-12)


def _histories(draw_bits, steps, n_pre, n_post):
    pre = np.array(draw_bits[: steps * n_pre], dtype=bool).reshape(steps, n_pre)
    post = np.array(draw_bits[steps * n_pre :], dtype=bool).reshape(steps, n_post)
    return pre, post


class FakeLayer:
    def __init__(self, n):
        from snnsim.neurons import LayerState

        self.state = LayerState.empty(n, with_v=False)
        self.n = n

    @property
    def s(self):
        return self.state.s

    @property
    def x(self):
        return self.state.x

    def set(self, s, x):
        self.state.s = np.asarray(s, dtype=bool)
        self.state.x = np.asarray(x, dtype=float)


def make_conn(kind, rule, rng):
    if kind == "dense":
        return DenseConnection("a", "b", rng.random((6, 5)), wmin=-1e9, wmax=1e9, rule=rule)
    if kind == "dense_big":
        return DenseConnection("a", "b", rng.random((120, 90)), wmin=-1e9, wmax=1e9, rule=rule)
    if kind == "sparse":
        return SparseConnection("a", "b", rng.random((6, 5)), mask=rng.random((6, 5)) < 0.5, wmin=-1e9, wmax=1e9, rule=rule)
    return ConvConnection("a", "b", rng.random((2, 1, 3, 3)), input_shape=(1, 5, 5), wmin=-1e9, wmax=1e9, rule=rule)


def drive(conn, rng, steps, rewards, update_fn=None):
    """Feed random spikes through ``conn.rule``; with ``update_fn`` also run the reference."""
    pre, post = FakeLayer(conn.n_pre), FakeLayer(conn.n_post)
    w_ref = conn.w.copy()
    state = None
    if update_fn is not None:
        p = conn.rule.params
        state = MstdpState.zeros(conn, eligibility=conn.rule.eligibility, **p)
    for t in range(steps):
        s_pre = rng.random(conn.n_pre) < 0.3
        s_post = rng.random(conn.n_post) < 0.3
        pre.set(s_pre, rng.random(conn.n_pre))
        post.set(s_post, rng.random(conn.n_post))
        conn.rule.update(pre, post, rewards[t], 1.0)
        if update_fn is not None:
            w_ref += update_fn(conn, state, s_pre, s_post, rewards[t], 1.0)
            if hasattr(conn, "mask"):
                w_ref[~conn.mask] = 0.0
    return w_ref


@pytest.mark.parametrize("kind", ["dense", "dense_big", "sparse", "conv"])
@pytest.mark.parametrize("cls,fn", [(MSTDP, mstdp_update), (MSTDPET, mstdp_et_update)])
def test_in_place_reward_rules_match_reference(rng, kind, cls, fn):
    conn = make_conn(kind, cls(gamma=0.3, tau_e=10.0, a_plus=0.8, a_minus=-0.6), rng)
    rewards = rng.normal(size=40)
    rewards[::4] = 0.0
    w_ref = drive(conn, rng, 40, rewards, fn)
    assert np.allclose(conn.w, w_ref, atol=1e-10)


@pytest.mark.parametrize("kind", ["dense", "dense_big", "sparse", "conv"])
@pytest.mark.parametrize("cls,fn,sign", [(PostPre, post_pre_update, -1), (Hebbian, hebbian_update, 1)])
def test_in_place_pair_rules_match_reference(rng, kind, cls, fn, sign):
    conn = make_conn(kind, cls(lr_pre=0.02, lr_post=0.05), rng)
    w_ref = conn.w.copy()
    pre, post = FakeLayer(conn.n_pre), FakeLayer(conn.n_post)
    for _ in range(25):
        pre.set(rng.random(conn.n_pre) < 0.3, rng.random(conn.n_pre))
        post.set(rng.random(conn.n_post) < 0.3, rng.random(conn.n_post))
        conn.rule.update(pre, post, 0.0, 1.0)
        w_ref += fn(conn, pre.s, post.s, pre.x, post.x, 0.02, 0.05)
        if hasattr(conn, "mask"):
            w_ref[~conn.mask] = 0.0
    assert np.allclose(conn.w, w_ref, atol=1e-10)


# Binary scaling is exact only while nothing underflows, so r stays well clear of subnormals.
@given(st.lists(st.booleans(), min_size=40 * 7, max_size=40 * 7),
       st.floats(-3, 3, allow_subnormal=False).filter(lambda r: abs(r) > 1e-100),
       st.sampled_from([2.0, 0.5, -4.0, 0.25]))
def test_reward_linearity_exact_for_power_of_two_scale(bits, r, c):
    pre_h, post_h = _histories(bits, 40, 4, 3)
    for fn in (mstdp_update, mstdp_et_update):
        deltas = []
        for reward in (r, c * r):
            conn = DenseConnection("a", "b", np.zeros((4, 3)))
            state = MstdpState.zeros(conn, eligibility=True)
            d = np.zeros((4, 3))
            for s_pre, s_post in zip(pre_h, post_h):
                d = fn(conn, state, s_pre, s_post, reward, 1.0)
            deltas.append(d)
        assert np.array_equal(deltas[1], c * deltas[0])


@given(st.lists(st.booleans(), min_size=40 * 7, max_size=40 * 7), st.floats(-3, 3), st.floats(-5, 5))
def test_reward_linearity_any_scale(bits, r, c):
    pre_h, post_h = _histories(bits, 40, 4, 3)
    for fn in (mstdp_update, mstdp_et_update):
        deltas = []
        for reward in (r, c * r, 0.0):
            conn = DenseConnection("a", "b", np.zeros((4, 3)))
            state = MstdpState.zeros(conn, eligibility=True)
            for s_pre, s_post in zip(pre_h, post_h):
                d = fn(conn, state, s_pre, s_post, reward, 1.0)
            deltas.append(d)
        assert np.allclose(deltas[1], c * deltas[0], rtol=1e-14, atol=1e-300)
        assert not deltas[2].any()


@pytest.mark.parametrize("cls", [MSTDP, MSTDPET])
def test_zero_reward_or_gamma_leaves_weights(rng, cls):
    for gamma, reward in ((0.25, 0.0), (0.0, 1.0)):
        conn = make_conn("dense", cls(gamma=gamma), rng)
        w0 = conn.w.copy()
        drive(conn, rng, 30, np.full(30, reward))
        assert np.array_equal(conn.w, w0)


def test_mstdp_traces_are_additive():
    conn = DenseConnection("a", "b", np.zeros((1, 1)))
    state = MstdpState.zeros(conn)
    one = np.array([True])
    mstdp_update(conn, state, one, one, 0.0, 1.0)
    mstdp_update(conn, state, one, one, 0.0, 1.0)
    assert state.p_plus[0] == pytest.approx(1.0 + math.exp(-1 / 20))
    assert state.p_minus[0] == pytest.approx(-(1.0 + math.exp(-1 / 20)))


def test_mstdp_et_eligibility_decays_and_converts():
    conn = DenseConnection("a", "b", np.zeros((1, 1)))
    state = MstdpState.zeros(conn, eligibility=True, gamma=0.5, tau_e=10.0)
    d = mstdp_et_update(conn, state, np.array([True]), np.array([False]), 0.0, 1.0)
    assert not d.any()
    # Pre spike alone: zeta = s_pre * p_minus = 0 (no post trace yet).
    d = mstdp_et_update(conn, state, np.array([False]), np.array([True]), 0.0, 1.0)
    e = math.exp(-1 / 20)  # p_plus after one step of decay
    assert state.e[0, 0] == pytest.approx(e)
    d = mstdp_et_update(conn, state, np.array([False]), np.array([False]), 2.0, 1.0)
    assert d[0, 0] == pytest.approx(0.5 * 2.0 * e * math.exp(-1 / 10))


def test_rule_validation_and_factory():
    with pytest.raises(ValidationError):
        PostPre(lr_pre=-1.0)
    with pytest.raises(ValidationError):
        MSTDP(a_plus=-1.0)
    with pytest.raises(ValidationError):
        MSTDPET(tau_e=0.0)
    with pytest.raises(ValidationError):
        build_rule({"type": "nope"})
    for rule in (PostPre(0.1, 0.2), Hebbian(0.3, 0.4), MSTDP(gamma=0.1), MSTDPET(tau_e=3.0)):
        clone = build_rule(rule.config())
        assert type(clone) is type(rule) and clone.config() == rule.config()


def test_non_finite_reward_rejected():
    conn = DenseConnection("a", "b", np.zeros((1, 1)))
    with pytest.raises(NumericError):
        mstdp_update(conn, MstdpState.zeros(conn), np.array([True]), np.array([True]), np.inf, 1.0)


def test_rule_reset_clears_traces(rng):
    conn = make_conn("dense", MSTDPET(), rng)
    drive(conn, rng, 10, np.ones(10))
    conn.rule.reset()
    assert not any(a.any() for a in conn.rule.state_arrays().values())
