import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kolmofrac.fractional import aronszajn_energy, carre_direct, frac_laplacian_direct
from kolmofrac.hormander import InvalidInputError
from kolmofrac.quadrature import QuadratureSpec, _gl_on, radial_mesh
from kolmofrac.special import gamma_fn, gamma_ns
from kolmofrac.testfn import constant, gaussian, poly_gaussian


def fourier_frac_laplacian(x, s, c=0.0):
    """(-Delta)^s e^{-(x-c)^2} through its Fourier multiplier |xi|^{2s}."""
    mp.mp.dps = 30
    f = lambda xi: xi ** (2 * s) * mp.exp(-xi ** 2 / 4) * mp.cos(xi * (x - c))
    return float(mp.quad(f, [0, 2, 6, 12, mp.inf]) / mp.sqrt(mp.pi))


class TestGamma:
    def test_factorials(self):
        assert gamma_fn(1.0) == 1.0 and math.isclose(gamma_fn(5.0), 24.0, rel_tol=1e-15)

    def test_half(self):
        assert math.isclose(gamma_fn(0.5), float(mp.sqrt(mp.pi)), rel_tol=1e-15)

    @pytest.mark.parametrize("x", [0.01, 0.3, 2.7, 13.1, 49.9])
    def test_against_mpmath(self, x):
        assert math.isclose(gamma_fn(x), float(mp.gamma(x)), rel_tol=1e-13)

    def test_pole_behaviour(self):
        s = 0.999
        assert math.isclose(gamma_fn(1 - s) * (1 - s), 1.0, rel_tol=1e-3)

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidInputError):
            gamma_fn(0.0)

    def test_normalization(self):
        assert abs(gamma_ns(1, 0.5) - 1 / math.pi) <= 1e-12

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("s", [0.1, 0.5, 0.9, 0.999])
    def test_normalization_form(self, n, s):
        ref = s * 4 ** s * float(mp.gamma(s + n / 2)) / (math.pi ** (n / 2) * float(mp.gamma(1 - s)))
        assert math.isclose(gamma_ns(n, s), ref, rel_tol=1e-13)
        assert gamma_ns(n, s) * gamma_fn(1 - s) > 0

    @pytest.mark.parametrize("s", [0.0, 1.0, 0.9995, -0.2])
    def test_order_range(self, s):
        with pytest.raises(InvalidInputError):
            gamma_ns(1, s)


class TestDirectLaplacian:
    def test_constant(self):
        assert frac_laplacian_direct(constant(2.0, 2), [0.3, 0.1], 0.4) == 0.0

    @pytest.mark.parametrize("x", [0.0, 0.5, 1.0, 2.0, -1.5])
    def test_fourier_oracle(self, x):
        v = gaussian([0.2], 1.0)
        ref = fourier_frac_laplacian(x, 0.5, 0.2)
        assert math.isclose(frac_laplacian_direct(v, [x], 0.5), ref, rel_tol=1e-5)

    @pytest.mark.parametrize("s", [0.2, 0.8])
    def test_fourier_oracle_other_orders(self, s):
        v = gaussian([0.0], 1.0)
        for x in (0.0, 1.3):
            assert math.isclose(frac_laplacian_direct(v, [x], s), fourier_frac_laplacian(x, s),
                                rel_tol=1e-5)

    def test_near_one(self):
        v = gaussian([0.0], 1.0)
        for x in (0.0, 0.3, 1.5):
            lap = v.laplacian([x])
            assert abs(frac_laplacian_direct(v, [x], 0.999) + lap) <= 0.02 * abs(lap)

    def test_unsupported_dimension(self):
        with pytest.raises(InvalidInputError):
            frac_laplacian_direct(gaussian(np.zeros(4)), np.zeros(4), 0.5)

    def test_batched(self):
        v = gaussian([0.0, 0.1], [1.0, 0.5])
        xs = np.array([[0.0, 0.0], [0.5, -0.3], [1.0, 1.0]])
        batch = frac_laplacian_direct(v, xs, 0.4)
        assert np.allclose(batch, [frac_laplacian_direct(v, x, 0.4) for x in xs], rtol=1e-14)


class TestDirectCarre:
    def test_constant(self):
        assert carre_direct(constant(1.0, 1), [0.0], 0.5) == 0.0

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_identity(self, n):
        v = poly_gaussian({(0,) * n: 1.0, (1,) + (0,) * (n - 1): 0.5}, np.full(n, 0.1), 0.8)
        xs = np.array([np.full(n, a) for a in (0.0, 0.3, -0.5, 1.0, 2.0)])
        s = 0.5
        lhs = carre_direct(v, xs, s)
        rhs = -0.5 * (frac_laplacian_direct(v * v, xs, s)
                      - 2 * v(xs) * frac_laplacian_direct(v, xs, s))
        scale = np.abs(lhs) + np.abs(v(xs) * frac_laplacian_direct(v, xs, s)) + 1e-3
        assert np.all(np.abs(lhs - rhs) <= 1e-5 * scale)

    def test_near_one_gradient(self):
        v = gaussian([0.0], 1.0)
        for x in (0.3, 0.7, 1.2):
            g2 = v.grad([x])[0] ** 2
            assert abs(carre_direct(v, [x], 0.99) - g2) <= 0.05 * g2

    @pytest.mark.parametrize("x", [1e2, 1e3, 1e5])
    def test_far_field(self, x):
        # far from the bump the value tends to (gamma/2) |v|_2^2 |x|^{-1-2s}
        v = gaussian([0.1], 1.2)
        s = 0.5
        norm2 = math.sqrt(math.pi / 2.4)
        ref = 0.5 * gamma_ns(1, s) * norm2 * x ** (-1 - 2 * s)
        assert math.isclose(carre_direct(v, [x], s), ref, rel_tol=5.0 / x)

    @given(st.floats(-3, 3), st.floats(0.05, 0.95))
    @settings(max_examples=15)
    def test_nonnegative(self, x, s):
        v = poly_gaussian({(0,): 1.0, (1,): -0.8}, [0.2], 1.3)
        assert carre_direct(v, [x], s) >= 0


class TestEnergy:
    def test_zero(self):
        assert aronszajn_energy(constant(0.0, 1), 0.5) == 0.0

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_closed_form(self, s):
        # Plancherel: E = (1/2) int |xi|^{2s} |v^|^2 dxi / 2pi = 2^{s-3/2} Gamma(s+1/2)
        ref = 2 ** (s - 1.5) * math.gamma(s + 0.5)
        assert math.isclose(aronszajn_energy(gaussian([0.3]), s), ref, rel_tol=1e-8)

    @pytest.mark.parametrize("s", [0.5, 0.75])
    def test_fubini(self, s):
        v = poly_gaussian({(0,): 1.0, (1,): 0.4}, [0.1], 1.2)
        rule = radial_mesh(QuadratureSpec())
        r, w = rule.nodes, rule.weights
        xs = np.concatenate([0.1 + r, 0.1 - r])[:, None]
        vals = carre_direct(v, xs, s)
        total = np.concatenate([w, w]) @ vals
        assert math.isclose(aronszajn_energy(v, s), 0.5 * total, rel_tol=1e-2)

    def test_euler_lagrange(self):
        s, eps = 0.5, 1e-4
        v = gaussian([0.0], 1.0)
        phi = poly_gaussian({(1,): 1.0}, [0.4], 2.0)
        dE = (aronszajn_energy(v + eps * phi, s) - aronszajn_energy(v - eps * phi, s)) / (2 * eps)
        x, w = _gl_on(np.linspace(-5, 5, 41), 16)
        pairing = w @ (frac_laplacian_direct(v, x[:, None], s) * phi(x[:, None]))
        assert math.isclose(dE, pairing, rel_tol=1e-3)

    def test_needs_one_dimension(self):
        with pytest.raises(InvalidInputError):
            aronszajn_energy(gaussian([0.0, 0.0]), 0.5)
