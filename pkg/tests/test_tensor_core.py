import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from detrk.tensor_core import (DimensionError, bilinear_sample, bilinear_sample_grad, bilinear_sample_many,
                               conv2d, finite_diff_grad, inverse_sigmoid, layer_norm, linear, relative_error,
                               sigmoid, softmax)
from detrk.oracles import naive_bilinear


def test_linear_examples():
    assert np.array_equal(linear([1, 2, 3], np.eye(3), np.zeros(3)), [1, 2, 3])
    assert np.array_equal(linear([7, -2], np.zeros((2, 2)), [5, 5]), [5, 5])
    assert np.array_equal(linear([2, 3], [[1, 1], [1, -1]], [0, 0]), [5, -1])


def test_linear_shape_mismatch():
    with pytest.raises(DimensionError):
        linear([1, 2], np.eye(3))
    with pytest.raises(DimensionError):
        linear([1, 2, 3], np.eye(3), np.zeros(2))


def test_sigmoid_and_softmax_examples():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(math.log(3)) == pytest.approx(0.75, abs=1e-15)
    assert np.allclose(softmax(np.full(4, 2.7)), 0.25, atol=1e-15)


def test_sigmoid_extremes_are_finite():
    out = sigmoid(np.array([-1000.0, 1000.0]))
    assert out[0] == 0.0 and out[1] == 1.0
    assert inverse_sigmoid(sigmoid(1.3)) == pytest.approx(1.3)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.floats(-100, 100))
def test_softmax_normalised_and_shift_invariant(values, shift):
    x = np.array(values)
    p = softmax(x)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.allclose(softmax(x + shift), p, atol=1e-12)


def test_layer_norm_statistics(rng):
    y = layer_norm(rng.normal(3.0, 5.0, (7, 16)))
    assert np.allclose(y.mean(axis=-1), 0.0, atol=1e-12)
    assert np.allclose(y.var(axis=-1), 1.0, atol=1e-4)


def test_bilinear_examples():
    fmap = np.arange(24, dtype=float).reshape(2, 3, 4)
    assert np.array_equal(bilinear_sample(fmap, (1, 1)), fmap[:, 1, 1])
    assert bilinear_sample(np.array([[[1.0, 2.0], [3.0, 4.0]]]), (0.5, 0.5))[0] == 2.5
    assert np.array_equal(bilinear_sample(fmap, (-5, -5)), np.zeros(2))


def test_bilinear_lattice_points_exact(rng):
    fmap = rng.normal(size=(3, 5, 6))
    for yi in range(5):
        for xi in range(6):
            assert np.array_equal(bilinear_sample(fmap, (xi, yi)), fmap[:, yi, xi])


def test_bilinear_rejects_bad_input():
    with pytest.raises(DimensionError):
        bilinear_sample(np.zeros((4, 4)), (0, 0))
    with pytest.raises(ValueError):
        bilinear_sample(np.zeros((1, 4, 4)), (math.nan, 0))


@given(st.floats(-3, 8), st.floats(-3, 8), st.floats(-2, 2), st.floats(-2, 2))
def test_bilinear_linear_in_map(x, y, alpha, beta):
    r = np.random.default_rng(7)
    A, B = r.normal(size=(2, 2, 4, 5))
    lhs = bilinear_sample(alpha * A + beta * B, (x, y))
    rhs = alpha * bilinear_sample(A, (x, y)) + beta * bilinear_sample(B, (x, y))
    assert np.allclose(lhs, rhs, atol=1e-12)


@given(st.floats(-2, 6), st.floats(-2, 5))
def test_bilinear_matches_naive(x, y):
    fmap = np.random.default_rng(3).normal(size=(2, 4, 5))
    assert np.allclose(bilinear_sample(fmap, (x, y)), naive_bilinear(fmap, x, y), atol=1e-13)


def test_bilinear_many_matches_scalar(rng):
    fmap = rng.normal(size=(3, 4, 6))
    xs, ys = rng.uniform(-2, 7, (5, 2)), rng.uniform(-2, 5, (5, 2))
    many = bilinear_sample_many(fmap, xs, ys)
    for idx in np.ndindex(xs.shape):
        assert np.allclose(many[idx], bilinear_sample(fmap, (xs[idx], ys[idx])), atol=1e-13)


def test_bilinear_grad_examples(rng):
    _, g = bilinear_sample_grad(np.full((2, 4, 4), 3.0), (1.3, 2.2), np.ones(2))
    assert g == (0.0, 0.0)
    ramp = np.tile(np.arange(5.0), (1, 4, 1))
    _, g = bilinear_sample_grad(ramp, (1.3, 1.6), np.ones(1))
    assert g == pytest.approx((1.0, 0.0))
    fmap = rng.normal(size=(1, 4, 4))
    up = np.ones(1)
    _, g = bilinear_sample_grad(fmap, (1.3, 2.7), up)
    num = finite_diff_grad(lambda p: up @ bilinear_sample(fmap, p), np.array([1.3, 2.7]))
    assert relative_error(g, num) <= 1e-6


def test_bilinear_grad_right_sided_on_integers():
    fmap = np.array([[[0.0, 1.0, 5.0]]])
    _, (gx, _) = bilinear_sample_grad(fmap, (1.0, 0.0), np.ones(1))
    assert gx == 4.0     # slope of the cell to the right


def test_finite_diff_examples():
    assert np.allclose(finite_diff_grad(lambda v: np.sum(v ** 2), np.array([1.0, 2.0])), [2, 4], rtol=1e-6)
    assert np.array_equal(finite_diff_grad(lambda v: 3.0, np.array([1.0, 2.0])), [0.0, 0.0])
    assert np.allclose(finite_diff_grad(lambda v: v[0] * v[1], np.array([3.0, 5.0])), [5, 3], rtol=1e-6)


def test_finite_diff_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        finite_diff_grad(lambda v: math.inf, np.array([1.0]))


def test_conv2d_matches_loops(rng):
    x = rng.normal(size=(3, 7, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    out = conv2d(x, w, stride=2, padding=1)
    pad = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    for o in range(4):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                ref = np.sum(w[o] * pad[:, 2 * i:2 * i + 3, 2 * j:2 * j + 3])
                assert out[o, i, j] == pytest.approx(ref, abs=1e-12)
