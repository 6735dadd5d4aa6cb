import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import fd_grad
from kolmofrac.hormander import InvalidInputError
from kolmofrac.testfn import (constant, gaussian, gaussian_expectation, integral, poly_gaussian,
                              polynomial, time_slice)

coord = st.floats(-1.5, 1.5, allow_nan=False)


def random_function(rng, d):
    G = rng.normal(size=(d, d))
    A = 0.3 * G @ G.T + 0.4 * np.eye(d)
    c = rng.normal(size=d) * 0.5
    coeffs = {tuple(rng.integers(0, 3, size=d)): rng.normal() for _ in range(3)}
    return poly_gaussian(coeffs, c, A) + gaussian(rng.normal(size=d) * 0.5, 0.8, rng.normal())


class TestEvaluation:
    def test_peak(self):
        f = gaussian([0.0], 1.0)
        assert f([0.0]) == 1.0 and f.grad([0.0])[0] == 0.0 and f.laplacian([0.0]) == -2.0

    def test_slope_at_one(self):
        assert math.isclose(gaussian([0.0]).grad([1.0])[0], -2 * math.exp(-1), rel_tol=1e-14)

    def test_odd_factor(self):
        f = poly_gaussian({(1,): 1.0}, [0.0])
        assert f([0.0]) == 0.0 and math.isclose(f.grad([0.0])[0], 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            gaussian([0.0, 0.0])([1.0, 2.0, 3.0])

    def test_degree_cap(self):
        with pytest.raises(InvalidInputError):
            poly_gaussian({(7,): 1.0}, [0.0])

    def test_batched_eval(self):
        f = gaussian([0.1, 0.2], [[1.0, 0.3], [0.3, 2.0]])
        xs = np.random.default_rng(0).normal(size=(7, 2))
        assert np.allclose(f(xs), [f(x) for x in xs])

    @given(st.integers(0, 10_000), arrays(float, 3, elements=coord))
    def test_derivatives_match_differences(self, seed, x):
        f = random_function(np.random.default_rng(seed), 3)
        g = f.grad(x)
        assert np.allclose(g, fd_grad(f, x), rtol=1e-6, atol=1e-7)
        H = f.hessian(x)
        Hfd = np.array([fd_grad(lambda y: f.grad(y)[i], x) for i in range(3)])
        assert np.allclose(H, Hfd, rtol=1e-6, atol=1e-7)
        assert math.isclose(f.laplacian(x), np.trace(H), rel_tol=1e-12, abs_tol=1e-12)


class TestExpectation:
    @pytest.mark.parametrize("sigma", [0.1, 1.0, 3.0])
    def test_gaussian_product(self, sigma):
        val = gaussian_expectation(gaussian([0.0]), [0.0], [[sigma ** 2]])
        assert math.isclose(val, (1 + 2 * sigma ** 2) ** -0.5, rel_tol=1e-14)

    def test_constant(self):
        assert math.isclose(gaussian_expectation(constant(2.5, 2), [1.0, -1.0], np.eye(2)), 2.5)

    def test_second_moment(self):
        f = polynomial({(2,): 1.0}, 1)
        assert math.isclose(gaussian_expectation(f, [0.0], [[0.49]]), 0.49, rel_tol=1e-14)

    def test_rejects_indefinite_covariance(self):
        with pytest.raises(Exception):
            gaussian_expectation(gaussian([0.0, 0.0]), [0, 0], [[1, 2], [2, 1]])

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(20240)
        for k in range(20):
            d = 1 + k % 3
            f = random_function(rng, d)
            G = rng.normal(size=(d, d))
            S = G @ G.T / d + 0.2 * np.eye(d)
            m = rng.normal(size=d) * 0.5
            y = rng.multivariate_normal(m, S, size=1_000_000)
            vals = f(y)
            se = vals.std() / math.sqrt(vals.size)
            assert abs(gaussian_expectation(f, m, S) - vals.mean()) <= 4 * se + 1e-12

    def test_integral(self):
        f = poly_gaussian({(2, 0): 1.0}, [0.0, 0.0], [1.0, 2.0])
        # int x^2 e^{-x^2} dx * int e^{-2 y^2} dy
        ref = (math.sqrt(math.pi) / 2) * math.sqrt(math.pi / 2)
        assert math.isclose(integral(f), ref, rel_tol=1e-13)


class TestSlicing:
    def test_time_independent(self):
        v = gaussian([0.2, -0.1], [[1.0, 0.2], [0.2, 0.5]])
        u = v.extend_time()
        w = time_slice(u, 3.7)
        xs = np.random.default_rng(1).normal(size=(5, 2))
        assert np.allclose(w(xs), v(xs), rtol=1e-15)

    def test_separable(self):
        u = gaussian([0.0, 0.0, 0.0])
        w = time_slice(u, 1.0)
        x = np.array([0.3, -0.4])
        assert math.isclose(w(x), math.exp(-1) * math.exp(-0.25), rel_tol=1e-14)

    def test_peak_slice(self):
        u = gaussian([0.0, 0.0, 1.0])
        x = np.array([0.3, -0.4])
        assert math.isclose(time_slice(u, 1.0)(x), math.exp(-0.25), rel_tol=1e-14)

    @given(st.integers(0, 10_000), st.floats(-2, 2), arrays(float, 2, elements=coord))
    def test_slice_agrees_with_eval(self, seed, t, x):
        u = random_function(np.random.default_rng(seed), 3)
        assert math.isclose(time_slice(u, t)(x), u(np.append(x, t)), rel_tol=1e-12,
                            abs_tol=1e-14)

    def test_sum_closure(self):
        u = gaussian([0, 0, 0]) + 2.0 * poly_gaussian({(1, 0, 1): 1.0}, [0, 0.5, 0])
        assert time_slice(u, 0.5).d == 2
