import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snnsim.encoding import SpikeTrain, bernoulli_encode, poisson_encode
from snnsim.errors import ValidationError
from snnsim.rng import make_rng, restore_rng, rng_state


def test_poisson_rate_matches_target():
    train = poisson_encode(np.array([50.0, 25.0]), 100_000, 1.0, max_rate=50.0, rng=make_rng(0))
    rates = train.data.mean(axis=0) * 1000.0
    assert abs(rates[0] - 50.0) <= 3.0
    assert abs(rates[1] - 25.0) <= 3.0


def test_zero_input_gives_no_spikes():
    train = poisson_encode(np.zeros(10), 500, rng=make_rng(0))
    assert train.data.shape == (500, 10) and not train.data.any()
    assert not bernoulli_encode(np.zeros(4), 100, rng=make_rng(0)).data.any()


def test_poisson_scales_with_dt():
    train = poisson_encode(np.ones(1000), 200, dt=0.5, max_rate=100.0, rng=make_rng(1))
    assert train.steps == 400 and train.dt == 0.5
    assert train.data.mean() == pytest.approx(0.05, abs=0.005)


def test_bernoulli_probability():
    train = bernoulli_encode(np.array([0.0, 0.5, 1.0]), 40_000, max_prob=0.5, rng=make_rng(2))
    assert np.allclose(train.data.mean(axis=0), [0.0, 0.25, 0.5], atol=0.01)


@given(st.integers(0, 2**32 - 1))
def test_same_seed_same_train(seed):
    x = np.linspace(0, 255, 20)
    a = poisson_encode(x, 30, rng=make_rng(seed)).data
    b = poisson_encode(x, 30, rng=make_rng(seed)).data
    assert np.array_equal(a, b)


def test_rng_state_round_trip():
    rng = make_rng(5)
    rng.random(10)
    clone = restore_rng(rng_state(rng))
    assert np.array_equal(rng.random(5), clone.random(5))
    with pytest.raises(ValueError):
        make_rng(None)


def test_encoder_validation():
    with pytest.raises(ValidationError):
        poisson_encode(np.array([-1.0]), 10, rng=make_rng(0))
    with pytest.raises(ValidationError):
        poisson_encode(np.array([np.nan]), 10, rng=make_rng(0))
    with pytest.raises(ValidationError):
        poisson_encode(np.ones(2), 10, max_rate=2000.0, rng=make_rng(0))
    with pytest.raises(ValidationError):
        poisson_encode(np.ones(2), 10)
    with pytest.raises(ValidationError):
        bernoulli_encode(np.array([1.5]), 10, rng=make_rng(0))
    with pytest.raises(ValidationError):
        bernoulli_encode(np.array([0.5]), 10, max_prob=0.0, rng=make_rng(0))
    with pytest.raises(ValidationError):
        SpikeTrain(np.array([[0, 2]]))
    with pytest.raises(ValidationError):
        SpikeTrain(np.zeros(3))


def test_multidimensional_values_are_flattened():
    train = poisson_encode(np.ones((28, 28)), 5, rng=make_rng(0))
    assert train.n == 784
