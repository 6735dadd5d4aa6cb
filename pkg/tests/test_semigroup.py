import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from kolmofrac.hormander import (HormanderPair, HypoellipticityError, covariance_K, heat_pair,
                                 kolmogorov_pair, mat_exp)
from kolmofrac.quadrature import QuadratureSpec, hermite_rule
from kolmofrac.semigroup import (apply_PK, apply_Pt, cauchy_residual, dual_mass, generator,
                                 kernel, kernel_table, mc_apply_PK)
from kolmofrac.testfn import constant, gaussian, poly_gaussian, polynomial

DAMPED = HormanderPair(np.diag([1.0, 0.0]), [[-1.0, 0.0], [1.0, 0.0]], name="damped")
PAIRS = [heat_pair(1), heat_pair(2), kolmogorov_pair(), DAMPED]


def st_gaussian(N):
    return gaussian(np.linspace(-0.2, 0.3, N + 1), np.linspace(0.6, 1.2, N + 1))


class TestKernel:
    def test_heat_formula(self):
        X, Y, t = np.array([0.3, -0.1]), np.array([1.0, 0.4]), 0.7
        ref = -math.log(4 * math.pi * t) - np.sum((X - Y) ** 2) / (4 * t)
        assert math.isclose(kernel(heat_pair(2), X, Y, t).log_density, ref, rel_tol=1e-13)

    def test_at_mean(self):
        pair, X, t = kolmogorov_pair(), np.array([0.5, -1.0]), 1.3
        cov = covariance_K(pair, t)
        Y = mat_exp(pair.B, t) @ X
        ref = -math.log(4 * math.pi) - 0.5 * cov.logdet
        assert math.isclose(kernel(pair, X, Y, t).log_density, ref, rel_tol=1e-13)

    def test_kolmogorov_logdet(self):
        assert math.isclose(covariance_K(kolmogorov_pair(), 1.0).logdet, math.log(1 / 12),
                            rel_tol=1e-12)

    @pytest.mark.parametrize("pair", PAIRS, ids=lambda p: f"{p.name}{p.N}")
    def test_matches_scipy_density(self, pair):
        rng = np.random.default_rng(5)
        X, Y, t = rng.normal(size=pair.N), rng.normal(size=pair.N), 0.9
        ev = kernel(pair, X, Y, t)
        ref = stats.multivariate_normal(ev.mean, ev.covariance).logpdf(Y)
        assert math.isclose(ev.log_density, ref, rel_tol=1e-12)

    def test_degenerate(self):
        with pytest.raises(HypoellipticityError):
            kernel(HormanderPair(np.diag([1.0, 0]), np.zeros((2, 2))), [0, 0], [0, 0], 1.0)


class TestStationary:
    def test_constant(self):
        assert math.isclose(apply_Pt(kolmogorov_pair(), constant(3.0, 2), [0.4, 1.0], 2.0), 3.0,
                            rel_tol=1e-14)

    @pytest.mark.parametrize("pair", PAIRS, ids=lambda p: f"{p.name}{p.N}")
    @pytest.mark.parametrize("t", [1e-3, 1.0, 40.0])
    def test_mass(self, pair, t):
        one = constant(1.0, pair.N)
        assert abs(apply_Pt(pair, one, np.full(pair.N, 0.3), t) - 1.0) <= 1e-10
        assert abs(apply_Pt(pair, one, np.full(pair.N, 0.3), t, engine="hermite") - 1.0) <= 1e-10

    def test_heat_gaussian(self):
        # (4 pi t)^{-1/2} int e^{-(x-y)^2/4t} e^{-y^2} dy = (1+4t)^{-1/2} e^{-x^2/(1+4t)}
        for x, t in [(0.0, 0.5), (1.2, 2.0), (-0.7, 0.01)]:
            ref = math.exp(-x * x / (1 + 4 * t)) / math.sqrt(1 + 4 * t)
            val = apply_Pt(heat_pair(1), gaussian([0.0]), [x], t)
            assert math.isclose(val, ref, rel_tol=1e-13)

    def test_short_time(self):
        f = gaussian([0.1], 0.25)
        for x in (0.0, 0.5, -1.0):
            assert abs(apply_Pt(heat_pair(1), f, [x], 1e-6) - f([x])) <= 1e-6

    @pytest.mark.parametrize("pair", PAIRS[1:], ids=lambda p: p.name)
    def test_semigroup_law(self, pair):
        f = poly_gaussian({(1, 0): 1.0, (0, 0): 0.5}, [0.2, -0.1], [[0.8, 0.2], [0.2, 0.5]])
        X, t1, t2 = np.array([0.3, -0.4]), 0.4, 0.9
        tab = kernel_table(pair, [t2])
        z, w = hermite_rule(30, 2)
        Ys = tab.means(X)[0] + z @ tab.L[0].T
        inner = np.array([apply_Pt(pair, f, y, t1) for y in Ys])
        assert abs(w @ inner - apply_Pt(pair, f, X, t1 + t2)) <= 1e-7

    @pytest.mark.parametrize("pair", PAIRS, ids=lambda p: f"{p.name}{p.N}")
    def test_engines_agree(self, pair):
        f = poly_gaussian({(0,) * pair.N: 1.0, (1,) + (0,) * (pair.N - 1): 0.7},
                          np.full(pair.N, 0.2), 0.9)
        for t in (0.05, 1.0, 30.0):
            X = np.full(pair.N, -0.3)
            ex = apply_Pt(pair, f, X, t)
            he = apply_Pt(pair, f, X, t, engine="hermite")
            assert abs(he - ex) <= 1e-8 * max(abs(ex), 1e-3)

    @pytest.mark.parametrize("pair", PAIRS, ids=lambda p: f"{p.name}{p.N}")
    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_dual_mass(self, pair, t):
        val = dual_mass(pair, np.full(pair.N, 0.2), t)
        assert abs(val - math.exp(-t * pair.trace_B)) <= 1e-6 * math.exp(-t * pair.trace_B)


class TestEvolutive:
    def test_time_independent(self):
        pair = kolmogorov_pair()
        v = gaussian([0.1, 0.2], [[1.0, 0.3], [0.3, 0.7]])
        X, t, tau = np.array([0.4, -0.3]), 1.5, 0.8
        assert math.isclose(apply_PK(pair, v.extend_time(), X, t, tau), apply_Pt(pair, v, X, tau),
                            rel_tol=1e-14)

    def test_linear_in_time(self):
        u = polynomial({(0, 0, 1): 1.0}, 3)
        val = apply_PK(kolmogorov_pair(), u, [0.2, 0.1], 2.0, 0.75)
        assert math.isclose(val, 1.25, rel_tol=1e-14)

    def test_heat_space_time_gaussian(self):
        # u(Y, s) = exp(-Y^2 - 0.5 (s - 0.3)^2); Gaussian convolution in Y only
        u = gaussian([0.0, 0.3], [1.0, 0.5])
        X, t, tau = 0.6, 1.1, 0.4
        ref = (math.exp(-0.5 * (t - tau - 0.3) ** 2) * math.exp(-X * X / (1 + 4 * tau))
               / math.sqrt(1 + 4 * tau))
        assert math.isclose(apply_PK(heat_pair(1), u, [X], t, tau), ref, rel_tol=1e-13)

    def test_correlated_space_time_gaussian_against_quadrature(self):
        u = gaussian([0.1, 0.0], [[1.0, 0.4], [0.4, 0.8]])
        X, t, tau = 0.3, 0.5, 0.6
        f = lambda y: (math.exp(-(X - y) ** 2 / (4 * tau)) / math.sqrt(4 * math.pi * tau)
                       * u([y, t - tau]))
        ref, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)
        assert math.isclose(apply_PK(heat_pair(1), u, [X], t, tau), ref, rel_tol=1e-10)


class TestCauchy:
    def test_heat_space_time(self):
        u = gaussian([0.0, 0.2], [1.0, 0.6])
        assert cauchy_residual(heat_pair(1), u, [0.3], 0.7, 0.5, 1e-3) <= 1e-4

    def test_heat_time_independent(self):
        v = gaussian([0.1, -0.2], 0.8).extend_time()
        assert cauchy_residual(heat_pair(2), v, [0.3, 0.0], 0.0, 0.5, 1e-3) <= 1e-4

    def test_kolmogorov(self):
        u = st_gaussian(2)
        assert cauchy_residual(kolmogorov_pair(), u, [0.3, -0.2], 0.4, 0.5, 1e-3) <= 1e-4

    def test_constant(self):
        assert cauchy_residual(kolmogorov_pair(), constant(2.0, 3), [0.3, 1.0], 0.0, 1.0,
                               1e-3) <= 1e-13

    def test_step_too_large(self):
        with pytest.raises(ValueError):
            cauchy_residual(heat_pair(1), gaussian([0, 0]), [0.0], 0.0, 0.1, 0.2)

    def test_generator_matches_small_tau(self):
        pair, u = kolmogorov_pair(), st_gaussian(2)
        X, t, h = np.array([0.3, -0.2]), 0.4, 1e-4
        diff = (apply_PK(pair, u, X, t, h) - u(np.append(X, t))) / h
        assert math.isclose(diff, generator(pair, u, X, t), rel_tol=1e-3, abs_tol=1e-4)


class TestMonteCarlo:
    def test_constant(self):
        est, se = mc_apply_PK(kolmogorov_pair(), constant(1.0, 3), [0.1, 0.2], 0.0, 0.5)
        assert est == 1.0 and se == 0.0

    def test_heat_gaussian(self):
        u = gaussian([0.0, 0.0], [1.0, 0.5])
        X, t, tau = 0.4, 0.2, 0.7
        ref = apply_PK(heat_pair(1), u, [X], t, tau)
        est, se = mc_apply_PK(heat_pair(1), u, [X], t, tau, QuadratureSpec(mc_samples=20_000))
        assert abs(est - ref) <= 4 * se

    def test_kolmogorov_against_hermite(self):
        pair, u = kolmogorov_pair(), st_gaussian(2)
        X, t, tau = np.array([0.2, 0.5]), 0.3, 1.2
        he = apply_PK(pair, u, X, t, tau, engine="hermite")
        est, se = mc_apply_PK(pair, u, X, t, tau, QuadratureSpec(mc_samples=50_000, mc_seed=11))
        assert abs(est - he) <= 4 * se

    def test_deterministic(self):
        q = QuadratureSpec(mc_samples=2_000, mc_seed=123)
        a = mc_apply_PK(kolmogorov_pair(), st_gaussian(2), [0.0, 0.0], 0.0, 1.0, q, point_index=3)
        b = mc_apply_PK(kolmogorov_pair(), st_gaussian(2), [0.0, 0.0], 0.0, 1.0, q, point_index=3)
        c = mc_apply_PK(kolmogorov_pair(), st_gaussian(2), [0.0, 0.0], 0.0, 1.0, q, point_index=4)
        assert a == b and a != c


@given(st.floats(0.01, 20.0), st.floats(-1, 1), st.floats(-1, 1))
def test_positivity(tau, x0, x1):
    u = st_gaussian(2)
    assert apply_PK(kolmogorov_pair(), u, [x0, x1], 0.2, tau) > 0


def test_whitening_jacobian():
    # Y(Z) = e^{tau B}(X - (tau K(tau))^{1/2} Z) has dY = det(tau K)^{1/2} e^{tau tr B} dZ
    for pair in (kolmogorov_pair(), DAMPED):
        for tau in (0.3, 2.0):
            cov = covariance_K(pair, tau)
            E = mat_exp(pair.B, tau)
            X = np.array([0.4, -0.2])

            def Ymap(Z):
                return E @ (X - cov.chol @ Z)

            h = 1e-6
            J = np.column_stack([(Ymap(np.eye(2)[i] * h) - Ymap(-np.eye(2)[i] * h)) / (2 * h)
                                 for i in range(2)])
            ref = math.exp(0.5 * cov.logdet + tau * pair.trace_B)
            assert math.isclose(abs(np.linalg.det(J)), ref, rel_tol=1e-8)
