import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pocketnet import layers as L
from pocketnet.errors import InvalidParameterError, InvalidShapeError
from pocketnet.tensor import make_rng

from conftest import central_diff, naive_conv, rel_err


def _conv_loss(x, k, b, pad, w):
    return lambda: float(np.sum(L.conv2d_forward(x, k, b, pad)[0] * w))


# --- convolution ----------------------------------------------------------

def test_conv_valid_ones():
    out, _ = L.conv2d_forward(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1), "valid")
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 9


def test_conv_same_ones():
    out, _ = L.conv2d_forward(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1), "same")
    assert out[0, 0].tolist() == [[4, 6, 4], [6, 9, 6], [4, 6, 4]]


@pytest.mark.parametrize("padding,pad", [("valid", 0), ("same", 1)])
def test_conv_matches_direct_loops(rng, padding, pad):
    x = rng.normal(size=(1, 2, 6, 6))
    k = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out, _ = L.conv2d_forward(x, k, b, padding)
    assert np.max(np.abs(out - naive_conv(x, k, b, pad))) < 1e-12


def test_conv_is_cross_correlation():
    # a kernel with a single 1 in its top-left tap reads the top-left neighbour
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 0, 0] = 1
    out, _ = L.conv2d_forward(x, k, np.zeros(1), "valid")
    assert out[0, 0].tolist() == [[0, 1], [4, 5]]


def test_conv_rejects_small_input():
    with pytest.raises(InvalidShapeError):
        L.conv2d_forward(np.ones((1, 1, 2, 5)), np.ones((1, 1, 3, 3)), np.zeros(1), "valid")


@pytest.mark.parametrize("padding", ["valid", "same"])
def test_conv_backward_finite_differences(rng, padding):
    x = rng.normal(size=(2, 2, 5, 6))
    k = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out, cache = L.conv2d_forward(x, k, b, padding)
    w = rng.normal(size=out.shape)
    gx, gk, gb = L.conv2d_backward(w, cache)
    f = _conv_loss(x, k, b, padding, w)
    assert rel_err(gx, central_diff(f, x)) < 1e-6
    assert rel_err(gk, central_diff(f, k)) < 1e-6
    assert rel_err(gb, central_diff(f, b)) < 1e-6


def test_conv_backward_zero_grad_and_bias_sum(rng):
    x = rng.normal(size=(2, 2, 5, 5))
    k = rng.normal(size=(4, 2, 3, 3))
    out, cache = L.conv2d_forward(x, k, np.zeros(4), "same")
    gx, gk, gb = L.conv2d_backward(np.zeros_like(out), cache)
    assert not gx.any() and not gk.any() and not gb.any()

    g = rng.normal(size=out.shape)
    _, _, gb = L.conv2d_backward(g, cache)
    oracle = [sum(g[n, o, i, j] for n in range(2) for i in range(5) for j in range(5)) for o in range(4)]
    np.testing.assert_allclose(gb, oracle, rtol=1e-12)
    assert gx.shape == x.shape and gk.shape == k.shape


def test_conv_backward_shape_mismatch(rng):
    out, cache = L.conv2d_forward(rng.normal(size=(1, 1, 4, 4)), rng.normal(size=(1, 1, 3, 3)), np.zeros(1))
    with pytest.raises(InvalidShapeError):
        L.conv2d_backward(np.zeros((1, 1, 3, 3)), cache)


# --- pooling --------------------------------------------------------------

def test_maxpool_examples():
    out, _ = L.maxpool_forward(np.array([[[[1.0, 2], [3, 4]]]]))
    assert out.tolist() == [[[[4.0]]]]
    out, _ = L.maxpool_forward(np.arange(16.0).reshape(1, 1, 4, 4))
    assert out[0, 0].tolist() == [[5, 7], [13, 15]]
    out, _ = L.maxpool_forward(np.arange(25.0).reshape(1, 1, 5, 5))
    assert out[0, 0].tolist() == [[6, 8], [16, 18]]


def test_maxpool_backward_routing():
    out, cache = L.maxpool_forward(np.array([[[[1.0, 2], [3, 4]]]]))
    assert L.maxpool_backward(np.ones((1, 1, 1, 1)), cache)[0, 0].tolist() == [[0, 0], [0, 1]]
    assert not L.maxpool_backward(np.zeros((1, 1, 1, 1)), cache).any()


def test_maxpool_tie_goes_to_first_in_scan():
    _, cache = L.maxpool_forward(np.full((1, 1, 2, 2), 7.0))
    assert L.maxpool_backward(np.ones((1, 1, 1, 1)), cache)[0, 0].tolist() == [[1, 0], [0, 0]]


def test_maxpool_errors():
    with pytest.raises(InvalidShapeError):
        L.maxpool_forward(np.ones((1, 1, 1, 4)))
    _, cache = L.maxpool_forward(np.ones((1, 1, 4, 4)))
    with pytest.raises(InvalidShapeError):
        L.maxpool_backward(np.ones((1, 1, 1, 1)), cache)


def test_maxpool_finite_differences(rng):
    # a permutation keeps every window free of near-ties
    x = rng.permutation(2 * 3 * 5 * 7).reshape(2, 3, 5, 7).astype(float) * 0.1
    out, cache = L.maxpool_forward(x)
    w = rng.normal(size=out.shape)
    g = L.maxpool_backward(w, cache)
    num = central_diff(lambda: float(np.sum(L.maxpool_forward(x)[0] * w)), x)
    assert rel_err(g, num) < 1e-6


# --- pointwise ------------------------------------------------------------

def test_relu():
    out, cache = L.relu_forward(np.array([-1.0, 0.0, 2.0]))
    assert out.tolist() == [0, 0, 2]
    assert L.relu_backward(np.ones(3), cache).tolist() == [0, 0, 1]


def _pointwise_diff(fn, x, h=1e-5):
    # elementwise derivative oracle for pointwise maps
    return (fn(x + h)[0] - fn(x - h)[0]) / (2 * h)


def test_relu_finite_differences(rng):
    x = rng.normal(size=50)
    x[np.abs(x) < 0.01] = 0.5
    _, cache = L.relu_forward(x)
    assert rel_err(L.relu_backward(np.ones(50), cache), _pointwise_diff(L.relu_forward, x)) < 1e-8


def test_sigmoid():
    out, _ = L.sigmoid_forward(np.array([0.0, -100.0, 100.0]))
    assert out[0] == 0.5
    assert np.all((out > 0) & (out < 1))
    out32, _ = L.sigmoid_forward(np.array([-100.0, 100.0], dtype=np.float32))
    assert np.all((out32 > 0) & (out32 < 1))


def test_sigmoid_finite_differences(rng):
    x = rng.normal(scale=3, size=40)
    _, cache = L.sigmoid_forward(x)
    assert rel_err(L.sigmoid_backward(np.ones(40), cache), _pointwise_diff(L.sigmoid_forward, x)) < 1e-8


# --- dense ----------------------------------------------------------------

def test_dense_examples():
    x = np.array([[1.0, 2.0]])
    assert np.array_equal(L.dense_forward(x, np.eye(2), np.zeros(2))[0], x)
    assert L.dense_forward(x, np.array([[1.0], [1.0]]), np.array([0.5]))[0].tolist() == [[3.5]]
    with pytest.raises(InvalidShapeError):
        L.dense_forward(x, np.ones((3, 1)), np.zeros(1))


def test_dense_finite_differences(rng):
    x, W, b = rng.normal(size=(4, 6)), rng.normal(size=(6, 3)), rng.normal(size=3)
    out, cache = L.dense_forward(x, W, b)
    w = rng.normal(size=out.shape)
    gx, gW, gb = L.dense_backward(w, cache)
    f = lambda: float(np.sum(L.dense_forward(x, W, b)[0] * w))  # noqa: E731
    assert rel_err(gx, central_diff(f, x)) < 1e-6
    assert rel_err(gW, central_diff(f, W)) < 1e-6
    assert rel_err(gb, central_diff(f, b)) < 1e-6


# --- dropout --------------------------------------------------------------

def test_dropout_identities(rng):
    x = rng.normal(size=(8, 5))
    assert np.array_equal(L.dropout_forward(x, 0.0, "train", make_rng(0))[0], x)
    for ratio in (0.0, 0.3, 0.9):
        assert np.array_equal(L.dropout_forward(x, ratio, "infer")[0], x)


def test_dropout_rejects_ratio_one():
    with pytest.raises(InvalidParameterError):
        L.dropout_forward(np.ones(3), 1.0, "train", make_rng(0))


def test_dropout_preserves_expectation():
    out, _ = L.dropout_forward(np.ones(10**6), 0.3, "train", make_rng(0))
    assert 0.99 <= out.mean() <= 1.01
    assert abs(np.mean(out == 0) - 0.3) < 0.005


def test_dropout_backward_matches_fixed_mask(rng):
    x = rng.normal(size=(6, 7))
    w = rng.normal(size=x.shape)
    _, cache = L.dropout_forward(x, 0.3, "train", make_rng(5))
    f = lambda: float(np.sum(L.dropout_forward(x, 0.3, "train", make_rng(5))[0] * w))  # noqa: E731
    assert rel_err(L.dropout_backward(w, cache), central_diff(f, x)) < 1e-8


# --- flatten and shape arithmetic -----------------------------------------

def test_flatten(rng):
    x = np.arange(8.0).reshape(1, 2, 2, 2)
    flat, shape = L.flatten(x)
    assert flat.shape == (1, 8) and flat[0].tolist() == list(range(8))
    assert np.array_equal(L.flatten_backward(flat, shape), x)
    assert L.flatten(np.zeros((2, 256, 5, 7)))[0].shape == (2, 8960)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 20), st.integers(3, 20), st.sampled_from(["valid", "same"]))
def test_conv_pool_shape_arithmetic(h, w, padding):
    x = np.zeros((1, 1, h, w))
    out, _ = L.conv2d_forward(x, np.zeros((2, 1, 3, 3)), np.zeros(2), padding)
    assert out.shape[2:] == ((h - 2, w - 2) if padding == "valid" else (h, w))
    if min(out.shape[2:]) >= 2:
        pooled, _ = L.maxpool_forward(out)
        assert pooled.shape[2:] == (out.shape[2] // 2, out.shape[3] // 2)


def test_layer_spec_validation():
    assert L.LayerSpec("conv", 64).filter == (3, 3)
    with pytest.raises(InvalidParameterError):
        L.LayerSpec("dropout", dropout_ratio=1.0)
    with pytest.raises(InvalidParameterError):
        L.LayerSpec("softmax")
