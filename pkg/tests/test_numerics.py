"""Numeric substrate: matmul, activations, init, finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chargecast.errors import NumericalError, ShapeError
from chargecast.numerics import (
    finite_diff_gradient,
    glorot_init,
    make_rng,
    matmul,
    relative_error,
    relu,
    sigmoid,
    tanh,
)


class TestMatmul:
    def test_small_product_by_hand(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0], [6.0]])
        # [1*5+2*6, 3*5+4*6]
        assert matmul(a, b).tolist() == [[17.0], [39.0]]

    def test_identity(self):
        a = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(matmul(a, np.eye(3)), a)

    def test_inner_dim_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_non_2d_rejected(self):
        with pytest.raises(ShapeError):
            matmul(np.zeros(3), np.zeros((3, 2)))

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_matches_numpy_on_random_shapes(self, n, k, m, seed):
        rng = make_rng(seed)
        a = rng.standard_normal((n, k))
        b = rng.standard_normal((k, m))
        assert np.allclose(matmul(a, b), a @ b)


class TestActivations:
    def test_sigmoid_at_zero(self):
        assert sigmoid(np.array(0.0)) == 0.5

    def test_tanh_known_value(self):
        assert tanh(np.array(1.0)) == pytest.approx(0.7615941559557649, abs=1e-15)

    def test_sigmoid_extremes_are_finite(self):
        out = sigmoid(np.array([-1e4, -50.0, 50.0, 1e4]))
        assert np.all(np.isfinite(out))
        assert np.all((out >= 0.0) & (out <= 1.0))

    def test_relu(self):
        x = np.array([-2.0, -0.0, 0.5, 3.0])
        assert relu(x).tolist() == [0.0, 0.0, 0.5, 3.0]

    @given(st.floats(-30.0, 30.0))
    @settings(max_examples=50, deadline=None)
    def test_sigmoid_symmetry(self, x):
        arr = np.array(x)
        assert sigmoid(-arr) == pytest.approx(1.0 - sigmoid(arr), abs=1e-12)

    @given(st.floats(-30.0, 30.0))
    @settings(max_examples=50, deadline=None)
    def test_tanh_is_scaled_sigmoid(self, x):
        # tanh(x) = 2*sigmoid(2x) - 1, ties the two implementations together
        arr = np.array(x)
        assert tanh(arr) == pytest.approx(2.0 * sigmoid(2.0 * arr) - 1.0, abs=1e-12)


class TestGlorotInit:
    def test_bounds(self):
        rng = make_rng(0)
        w = glorot_init(40, 60, rng)
        bound = np.sqrt(6.0 / (40 + 60))
        assert w.shape == (40, 60)
        assert np.all(np.abs(w) <= bound)
        # draws should actually use most of the interval
        assert np.abs(w).max() > 0.9 * bound

    def test_deterministic_per_seed(self):
        a = glorot_init(7, 5, make_rng(123))
        b = glorot_init(7, 5, make_rng(123))
        c = glorot_init(7, 5, make_rng(124))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestFiniteDiffGradient:
    def test_quadratic(self):
        # f(p) = sum(p^2), df/dp = 2p
        p = np.array([1.0, -2.0, 0.5])
        g = finite_diff_gradient(lambda v: float(np.sum(v**2)), p)
        assert np.max(relative_error(g, 2.0 * p)) < 1e-6

    def test_cubic_cross_terms(self):
        # f(p) = p0^3 + 2*p0*p1, grad = (3 p0^2 + 2 p1, 2 p0)
        p = np.array([1.5, -0.7])
        g = finite_diff_gradient(lambda v: float(v[0] ** 3 + 2.0 * v[0] * v[1]), p)
        expected = np.array([3.0 * p[0] ** 2 + 2.0 * p[1], 2.0 * p[0]])
        assert np.max(relative_error(g, expected)) < 1e-6

    def test_params_left_untouched(self):
        p = np.array([0.3, 0.4])
        before = p.copy()
        finite_diff_gradient(lambda v: float(v.sum()), p)
        assert np.array_equal(p, before)

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(NumericalError):
            finite_diff_gradient(lambda v: 0.0, np.zeros(2), eps=0.0)

    def test_nonfinite_loss_is_reported(self):
        with pytest.raises(NumericalError):
            finite_diff_gradient(lambda v: float("nan"), np.ones(2))


class TestRelativeError:
    def test_matching_values_are_zero(self):
        a = np.array([1.0, -2.0])
        assert np.max(relative_error(a, a.copy())) == 0.0

    def test_floor_guards_tiny_denominators(self):
        # both near zero: |a-b| / 1e-8 floor, not a division blowup
        err = relative_error(np.array([1e-12]), np.array([0.0]))
        assert err[0] == pytest.approx(1e-4, rel=1e-6)
