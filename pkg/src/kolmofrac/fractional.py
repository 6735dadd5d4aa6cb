"""Real-space nonlocal operators on R^n.

The fractional Laplacian, its carre du champ and the Aronszajn energy are
evaluated directly from their singular-integral definitions.  Radial
integrals run on the graded rule of :func:`radial_mesh`; the pieces below
``radial_min`` and above ``radial_max`` are added in closed form from the
second-order Taylor expansion and from the value at infinity.
"""
from __future__ import annotations

import numpy as np
from scipy.special import gamma as _gamma

from .hormander import InvalidInputError
from .phi import PhiFunction
from .quadrature import QuadratureSpec, _gl_on, angular_rule, graded_rule, radial_mesh
from .special import check_order, gamma_ns

__all__ = ["Composed", "frac_laplacian_direct", "carre_direct", "aronszajn_energy",
           "direct_profile", "sphere_area"]


def sphere_area(n):
    """Area of the unit sphere in R^n; for n = 1 the counting measure of {-1, 1}."""
    return float(2.0 * np.pi ** (n / 2) / _gamma(n / 2))


class Composed:
    """``x -> phi(v(x))`` with chain-rule derivatives."""

    def __init__(self, phi: PhiFunction, v):
        self.phi = phi
        self.v = v
        self.d = v.d

    def __call__(self, x):
        return self.phi(self.v(x))

    def is_schwartz(self):
        return self.v.is_schwartz()

    def value_at_infinity(self):
        return float(self.phi(self.v.value_at_infinity()))

    def grad(self, x):
        return self.phi.d1(self.v(x)) * np.asarray(self.v.grad(x))

    def laplacian(self, x):
        g = np.asarray(self.v.grad(x))
        val = self.v(x)
        return float(self.phi.d1(val) * self.v.laplacian(x) + self.phi.d2(val) * (g @ g))


def _points(v, x):
    if v.d not in (1, 2, 3):
        raise InvalidInputError(f"direct operators support n in (1, 2, 3), got {v.d}")
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    x = np.atleast_2d(x.reshape(-1, v.d) if x.ndim <= 1 else x)
    if x.shape[-1] != v.d:
        raise InvalidInputError("point dimension does not match the function")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("points must be finite")
    return x, single


class DirectProfile:
    """Radial integrand of a direct operator at a batch of points.

    Point ``i`` has its own radial rule ``(nodes[i], weights[i])`` with the
    angular integrals ``values[i]``; ``near`` and ``far`` are the
    coefficients of the closed-form end pieces.
    """

    def __init__(self, n, nodes, weights, values, near, far, quad):
        self.n = n
        self.nodes = nodes
        self.weights = weights
        self.values = values
        self.near = near
        self.far = far
        self.quad = quad

    def integrate(self, s):
        """``(gamma(n,s)/2) int_0^inf values(r) r^{-1-2s} dr`` plus end pieces."""
        s = check_order(s)
        q = self.quad
        body = np.array([v @ (w * r ** (-1.0 - 2.0 * s))
                         for r, w, v in zip(self.nodes, self.weights, self.values)])
        near = self.near * q.radial_min ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
        far = self.far * q.radial_max ** (-2.0 * s) / (2.0 * s)
        return 0.5 * gamma_ns(self.n, s) * (body + near + far)


def _radial_bumps(v, x):
    """(radius, width) at which each Gaussian term of `v` is met from `x`."""
    fn = v.v if isinstance(v, Composed) else v
    out = []
    for lam, center, _ in (fn.envelope() if fn.is_schwartz() else ()):
        out.append((float(np.linalg.norm(x - center)), 1.0 / np.sqrt(2.0 * lam)))
    return out


def direct_profile(v, x, quad=None, kind="laplacian"):
    """Build the radial profile of ``(-Delta)^s v`` or of the carre du champ.

    Parameters
    ----------
    v : TestFunction or Composed on R^n, n <= 3
    x : one point or an array of points
    kind : ``laplacian`` or ``carre``
    """
    quad = quad or QuadratureSpec()
    x, _ = _points(v, x)
    n = v.d
    dirs, wdir = angular_rule(n, quad.angular_order)
    area = sphere_area(n)
    vinf = v.value_at_infinity()
    nodes, weights, vals = [], [], []
    near = np.empty(x.shape[0])
    far = np.empty(x.shape[0])
    for i, xi in enumerate(x):
        # the graded mesh is refined where the sphere |y| = r sweeps over a bump
        rule = graded_rule(quad.radial_min, quad.radial_max, quad.tau_panels,
                           quad.tau_panel_order, quad.tail_panels, quad.tail_order,
                           _radial_bumps(v, xi))
        steps = rule.nodes[:, None, None] * dirs[None, :, :]
        v0 = float(v(xi))
        vp = np.asarray(v(xi + steps))
        if kind == "laplacian":
            vm = np.asarray(v(xi - steps))
            vals.append((2.0 * v0 - vp - vm) @ wdir)
            near[i] = -area / n * float(v.laplacian(xi))
            far[i] = (2.0 * v0 - 2.0 * vinf) * area
        elif kind == "carre":
            vals.append((v0 - vp) ** 2 @ wdir)
            g = np.asarray(v.grad(xi), dtype=float)
            near[i] = area / n * float(g @ g)
            far[i] = (v0 - vinf) ** 2 * area
        else:
            raise InvalidInputError(f"unknown direct operator {kind!r}")
        nodes.append(rule.nodes)
        weights.append(rule.weights)
    return DirectProfile(n, nodes, weights, vals, near, far, quad)


def _direct(v, x, s, quad, kind):
    _, single = _points(v, x)
    out = direct_profile(v, x, quad, kind).integrate(s)
    return float(out[0]) if single else out


def frac_laplacian_direct(v, x, s, quad=None):
    """``(gamma(n,s)/2) int [2v(x) - v(x+y) - v(x-y)] |y|^{-n-2s} dy``."""
    return _direct(v, x, s, quad, "laplacian")


def carre_direct(v, x, s, quad=None):
    """``(gamma(n,s)/2) int (v(x) - v(y))^2 |x-y|^{-n-2s} dy``; nonnegative."""
    return _direct(v, x, s, quad, "carre")


def aronszajn_energy(v, s, quad=None, x_panels=48, x_order=16):
    """``(gamma(1,s)/4) int int (v(x)-v(y))^2 |x-y|^{-1-2s} dy dx`` for n = 1.

    With ``F(h) = int (v(x) - v(x+h))^2 dx`` the energy is
    ``(gamma/2) int_0^inf F(h) h^{-1-2s} dh``.  ``F`` is summed directly for
    ``h < 1`` and as ``2|v|^2 - 2 int v(x) v(x+h) dx`` beyond.
    """
    quad = quad or QuadratureSpec()
    s = check_order(s)
    if v.d != 1:
        raise InvalidInputError("the energy is implemented for n = 1")
    if v.is_constant():
        return 0.0
    if not v.is_schwartz():
        raise InvalidInputError("the energy needs a decaying function")
    lo, hi = v.support_box()
    lo, hi = float(lo[0]), float(hi[0])
    xs, wx = _gl_on(np.linspace(lo - 1.0, hi, x_panels + 1), x_order)
    xs_far, wx_far = _gl_on(np.linspace(lo, hi, x_panels + 1), x_order)
    rule = radial_mesh(quad)
    h = rule.nodes
    F = np.empty(h.size)
    small = h < 1.0
    v0 = np.asarray(v(xs[:, None]))
    shifted = np.asarray(v((xs[None, :] + h[small, None])[..., None]))
    F[small] = (v0[None, :] - shifted) ** 2 @ wx
    norm2 = float(np.asarray(v(xs_far[:, None])) ** 2 @ wx_far)
    vf = np.asarray(v(xs_far[:, None]))
    cross = np.asarray(v((xs_far[None, :] + h[~small, None])[..., None])) @ (wx_far * vf)
    F[~small] = 2.0 * norm2 - 2.0 * cross
    g = v.partial(0)
    grad2 = float(np.asarray(g(xs_far[:, None])) ** 2 @ wx_far)
    body = (rule.weights * h ** (-1.0 - 2.0 * s)) @ F
    near = grad2 * quad.radial_min ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
    far = 2.0 * norm2 * quad.radial_max ** (-2.0 * s) / (2.0 * s)
    return float(0.5 * gamma_ns(1, s) * (body + near + far))
