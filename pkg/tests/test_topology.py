import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from snnsim.errors import DimensionError, ValidationError
from snnsim.plasticity import PostPre
from snnsim.topology import ConvConnection, DenseConnection, SparseConnection, conv_output_size


def conv_matrix(kernel, input_shape, stride, padding):
    """Unrolled (n_pre, n_post) matrix of a 2-D cross-correlation, built entry by entry."""
    c_out, c_in, kh, kw = kernel.shape
    _, h, w = input_shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    m = np.zeros((c_in * h * w, c_out * oh * ow))
    for o in range(c_out):
        for p in range(oh):
            for q in range(ow):
                col = (o * oh + p) * ow + q
                for c in range(c_in):
                    for i in range(kh):
                        for j in range(kw):
                            y = p * stride + i - padding
                            x = q * stride + j - padding
                            if 0 <= y < h and 0 <= x < w:
                                m[(c * h + y) * w + x, col] += kernel[o, c, i, j]
    return m


def random_conv_case(rng):
    kh, kw = rng.integers(1, 6, size=2)
    stride = int(rng.choice([1, 2]))
    padding = int(rng.choice([0, 1, 2]))
    h = int(rng.integers(max(1, kh - 2 * padding), 17))
    w = int(rng.integers(max(1, kw - 2 * padding), 17))
    c_in, c_out = rng.integers(1, 3, size=2)
    kernel = rng.normal(size=(c_out, c_in, kh, kw))
    return kernel, (int(c_in), h, w), stride, padding


def test_conv_matches_unrolled_matrix(rng):
    for _ in range(60):
        kernel, shape, stride, padding = random_conv_case(rng)
        conn = ConvConnection("a", "b", kernel, input_shape=shape, stride=stride, padding=padding)
        m = conv_matrix(kernel, shape, stride, padding)
        assert m.shape == (conn.n_pre, conn.n_post)
        s = rng.random(conn.n_pre) < 0.3
        assert np.max(np.abs(conn.compute(s) - s @ m), initial=0.0) <= 1e-9
        # Plasticity deltas are the unrolled outer product summed over shared kernel entries.
        a, b = rng.random(conn.n_pre), rng.random(conn.n_post)
        delta = np.zeros_like(kernel)
        conn.accumulate_outer(delta, a, b, 1.0)
        for idx in np.ndindex(*kernel.shape):
            basis = np.zeros_like(kernel)
            basis[idx] = 1.0
            expected = a @ conv_matrix(basis, shape, stride, padding) @ b
            assert delta[idx] == pytest.approx(expected, abs=1e-9)
            break  # one entry per case keeps the test quick


def test_conv_output_size_and_validation():
    assert conv_output_size(28, 5, 1, 0) == 24
    assert conv_output_size(16, 3, 2, 1) == 8
    with pytest.raises(DimensionError):
        ConvConnection("a", "b", np.zeros((1, 2, 3, 3)), input_shape=(1, 8, 8))
    with pytest.raises(DimensionError):
        ConvConnection("a", "b", np.zeros((1, 1, 9, 9)), input_shape=(1, 8, 8))
    with pytest.raises(ValidationError):
        ConvConnection("a", "b", np.zeros((1, 1, 3, 3)), input_shape=(1, 8, 8), stride=0)


@pytest.mark.parametrize("shape", [(5, 7), (200, 100)])
def test_dense_compute_is_vector_matrix_product(rng, shape):
    w = rng.normal(size=shape)
    conn = DenseConnection("a", "b", w)
    s = rng.random(shape[0]) < 0.2
    assert np.allclose(conn.compute(s), s.astype(float) @ w, atol=1e-12)
    f = rng.random(shape[0])
    assert np.allclose(conn.compute(f), f @ w)
    assert not conn.compute(np.zeros(shape[0], dtype=bool)).any()
    with pytest.raises(DimensionError):
        conn.compute(np.zeros(shape[0] + 1, dtype=bool))


@pytest.mark.parametrize("shape", [(6, 4), (150, 120)])
@pytest.mark.parametrize("kinds", [("f", "b"), ("b", "f"), ("f", "f")])
def test_accumulate_outer_matches_numpy(rng, shape, kinds):
    def vec(kind, n):
        return rng.random(n) < 0.3 if kind == "b" else rng.random(n)

    a, b = vec(kinds[0], shape[0]), vec(kinds[1], shape[1])
    conn = DenseConnection("a", "b", np.zeros(shape))
    out = rng.random(shape)
    expected = out + 0.7 * np.outer(a.astype(float), b.astype(float))
    conn.accumulate_outer(out, a, b, 0.7)
    assert np.allclose(out, expected, atol=1e-12)

    a2, b2 = vec(kinds[1], shape[0]), vec(kinds[0], shape[1])
    expected = out + -0.3 * (np.outer(a.astype(float), b.astype(float)) + np.outer(a2.astype(float), b2.astype(float)))
    conn.accumulate_pair(out, a, b, a2, b2, -0.3)
    assert np.allclose(out, expected, atol=1e-12)


def test_sparse_mask_is_preserved(rng):
    w = rng.random((30, 20))
    mask = rng.random((30, 20)) < 0.4
    conn = SparseConnection("a", "b", w, mask=mask, norm=3.0, rule=PostPre(), wmax=10.0)
    assert not conn.w[~mask].any()
    conn.accumulate_outer(conn.w, rng.random(30), rng.random(20) < 0.5, 1.0)
    conn.accumulate_pair(conn.w, rng.random(30), np.ones(20, bool), np.ones(30, bool), rng.random(20), 1.0)
    conn.normalize()
    conn.clamp_weights()
    assert not conn.w[~mask].any()
    with pytest.raises(DimensionError):
        SparseConnection("a", "b", w, mask=mask[:, :3])


def test_sparse_default_mask_from_nonzeros():
    conn = SparseConnection("a", "b", np.array([[0.0, 1.0], [2.0, 0.0]]))
    assert conn.mask.tolist() == [[False, True], [True, False]]


@given(
    hnp.arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.floats(-10, 10)),
    st.floats(0.1, 100.0),
)
def test_normalize_makes_nonzero_columns_sum_to_norm(w, norm):
    conn = DenseConnection("a", "b", w, norm=norm)
    conn.normalize()
    sums = np.abs(conn.w).sum(axis=0)
    nonzero = np.abs(w).sum(axis=0) > 0
    assert np.all(np.abs(sums[nonzero] - norm) <= 1e-6)
    assert not conn.w[:, ~nonzero].any()


def test_conv_normalize_per_output_channel(rng):
    conn = ConvConnection("a", "b", rng.random((3, 2, 3, 3)), input_shape=(2, 6, 6), norm=5.0)
    conn.normalize()
    assert np.allclose(np.abs(conn.w).sum(axis=(1, 2, 3)), 5.0)


def test_clamp_weights_and_bounds():
    conn = DenseConnection("a", "b", np.array([[-2.0, 0.5, 3.0]]), wmin=-1.0, wmax=1.0)
    conn.clamp_weights()
    assert conn.w.tolist() == [[-1.0, 0.5, 1.0]]
    plastic = DenseConnection("a", "b", np.zeros((2, 2)), rule=PostPre())
    assert (plastic.wmin, plastic.wmax) == (0.0, 1.0)
    static = DenseConnection("a", "b", np.zeros((2, 2)))
    assert not static.bounded
    with pytest.raises(ValidationError):
        DenseConnection("a", "b", np.zeros((2, 2)), wmin=1.0, wmax=0.0)
    with pytest.raises(ValidationError):
        DenseConnection("a", "b", np.zeros((2, 2)), norm=0.0)
    with pytest.raises(DimensionError):
        DenseConnection("a", "b", np.zeros(3))


def test_weights_are_copied_on_construction():
    w = np.ones((2, 2))
    conn = DenseConnection("a", "b", w)
    conn.w[0, 0] = 5.0
    assert w[0, 0] == 1.0
