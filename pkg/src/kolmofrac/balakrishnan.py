"""Fractional powers of the Kolmogorov operator by subordination.

Every object here is a weighted tau-integral of the evolutive semigroup::

    (-K)^s u     = -(s / Gamma(1-s)) int tau^{-1-s} (P_tau u - u) dtau
    Gamma^K_s(u) =  (s / 2 Gamma(1-s)) int tau^{-1-s} P_tau (u - u(X,t))^2 dtau

The integrand profile ``g(tau) = P_tau[psi(u)](X, t) - psi(u(X, t))`` is
evaluated once on the tau mesh and then integrated for any number of orders
``s``.  Below ``tau_min`` the profile is replaced by ``a tau`` with ``a`` the
exact generator value, above ``tau_max`` by its value at ``tau_max``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hormander import InvalidInputError
from .phi import PhiFunction, identity, shifted_square
from .quadrature import QuadratureSpec, box_rule, tau_mesh
from .semigroup import (HERMITE_MAX_DIM, _mc_samples, _space_time, generator, kernel_table,
                        point_rng, profile, resolve_engine)
from .special import check_order, gamma_fn

__all__ = [
    "RangeViolationError",
    "TruncationError",
    "TaylorRemainder",
    "TauProfile",
    "tau_profile",
    "mc_tau_integral",
    "frac_K",
    "frac_K_mc",
    "frac_K_phi",
    "carre_evolutive",
    "remainder",
    "remainder_mc",
    "remainder_terms",
    "besov_seminorm",
    "kernel_scaling_integral",
]


class RangeViolationError(InvalidInputError):
    """The range of ``u`` leaves the interval where the nonlinearity is used."""


class TruncationError(RuntimeError):
    """Doubling the integration box changed the result by more than 1%."""


class TaylorRemainder:
    """``r -> phi(r) - phi(c) - phi'(c)(r-c) - phi''(c)(r-c)^2 / 2``."""

    def __init__(self, phi: PhiFunction, center):
        self.phi = phi
        self.c = float(center)
        self.p0 = float(phi(self.c))
        self.p1 = float(phi.d1(self.c))
        self.p2 = float(phi.d2(self.c))
        self.name = f"taylor[{phi.name}]"

    def __call__(self, r):
        d = np.asarray(r, dtype=float) - self.c
        return self.phi(r) - self.p0 - d * (self.p1 + 0.5 * self.p2 * d)

    def d1(self, r):
        d = np.asarray(r, dtype=float) - self.c
        return self.phi.d1(r) - self.p1 - self.p2 * d

    def d2(self, r):
        return self.phi.d2(r) - self.p2

    def poly_coeffs(self):
        coeffs = self.phi.poly_coeffs()
        if coeffs is None:
            return None
        c = self.c
        q = [-self.p0 + self.p1 * c - 0.5 * self.p2 * c * c, -self.p1 + self.p2 * c, -0.5 * self.p2]
        out = list(coeffs) + [0.0] * max(0, 3 - len(coeffs))
        return [a + (q[i] if i < 3 else 0.0) for i, a in enumerate(out)]

    def decay_order(self):
        return 1


class _AbsPower:
    """``r -> |r - c|^p``."""

    def __init__(self, center, p):
        self.c = float(center)
        self.p = float(p)

    def __call__(self, r):
        return np.abs(np.asarray(r, dtype=float) - self.c) ** self.p

    def poly_coeffs(self):
        return None

    def decay_order(self):
        return 1


def _time_bumps(u, t):
    """(tau-center, width) of the time profile of each term of `u`."""
    N = u.d - 1
    out = []
    for term in u.terms:
        A = term.A
        if not np.linalg.eigvalsh(A)[0] > 0:
            continue
        z = np.linalg.solve(2.0 * A, term.b)
        Ayy, Ayt, Att = A[:N, :N], A[:N, N], A[N, N]
        schur = Att - Ayt @ np.linalg.solve(Ayy, Ayt)
        if schur > 0:
            out.append((t - z[N], 1.0 / np.sqrt(2.0 * schur)))
    return out


def _check_range(u, phi):
    lo, hi = phi.interval
    if np.isinf(lo) and np.isinf(hi):
        return
    vlo, vhi = u.value_bounds()
    if vlo < lo or vhi > hi:
        raise RangeViolationError(
            f"range of u [{vlo:.6g}, {vhi:.6g}] is not contained in [{lo:g}, {hi:g}]")


def _orders(s):
    arr = np.atleast_1d(np.asarray(s, dtype=float))
    for v in arr:
        check_order(v)
    return arr, np.ndim(s) == 0


@dataclass(frozen=True)
class TauProfile:
    """Tabulated ``g(tau)`` with its closed-form end behaviour.

    ``g ~ near * tau`` below ``tau_min`` and ``g ~ tail`` above ``tau_max``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    near: float
    tail: float
    tau_min: float
    tau_max: float

    def weight_matrix(self, s):
        """Rows ``W[k]`` with ``integrate(s)[k] = W[k] @ [values, tail] + near piece``."""
        s = np.atleast_1d(s)
        W = self.weights[None, :] * self.nodes[None, :] ** (-1.0 - s[:, None])
        tail = self.tau_max ** (-s) / s
        return np.concatenate([W, tail[:, None]], axis=1)

    def near_piece(self, s):
        s = np.atleast_1d(s)
        return self.near * self.tau_min ** (1.0 - s) / (1.0 - s)

    def integrate(self, s):
        """``int_0^inf tau^{-1-s} g(tau) dtau`` for an array of orders."""
        W = self.weight_matrix(s)
        return W @ np.append(self.values, self.tail) + self.near_piece(s)


def _mesh_and_table(pair, u, t, quad):
    mesh = tau_mesh(quad, _time_bumps(u, t))
    nodes = np.append(mesh.nodes, quad.tau_max)
    return mesh, kernel_table(pair, nodes, quad.k_order)


def tau_profile(pair, u, psi, X, t, quad=None, engine="auto", _cache=None):
    """Profile ``g(tau) = P_tau[psi(u)](X,t) - psi(u(X,t))`` on the tau mesh."""
    quad = quad or QuadratureSpec()
    psi = psi or identity()
    u = _space_time(u, pair)
    X = np.asarray(X, dtype=float)
    if X.shape != (pair.N,):
        raise InvalidInputError("X must lie in R^N")
    engine = resolve_engine(psi, engine, pair.N)
    if engine == "mc":
        raise InvalidInputError("use mc_tau_integral for the Monte Carlo engine")
    if _cache is not None:
        mesh, table = _cache
    else:
        mesh, table = _mesh_and_table(pair, u, t, quad)
    base = float(psi(u(np.append(X, t))))
    if u.is_constant():
        # P_tau c = c: the profile vanishes identically
        vals = np.zeros(len(table))
    else:
        vals = profile(pair, u, psi, X, t, table, engine, quad) - base
    a = generator(pair, u, X, t, psi)
    return TauProfile(mesh.nodes, mesh.weights, vals[:-1], a, float(vals[-1]),
                      quad.tau_min, quad.tau_max)


def mc_tau_integral(pair, u, psi, X, t, s, quad=None, point_index=0):
    """Monte Carlo estimate of ``int tau^{-1-s} g(tau) dtau`` and its standard error.

    Samples share one antithetic set ``+-Z`` across all tau nodes, which
    cancels the ``O(sqrt(tau))`` fluctuation that would otherwise make the
    estimator's variance diverge at small tau.
    """
    quad = quad or QuadratureSpec()
    psi = psi or identity()
    u = _space_time(u, pair)
    X = np.asarray(X, dtype=float)
    s_arr, _ = _orders(s)
    mesh, table = _mesh_and_table(pair, u, t, quad)
    base = float(psi(u(np.append(X, t))))
    a = generator(pair, u, X, t, psi)
    prof = TauProfile(mesh.nodes, mesh.weights, np.zeros(mesh.nodes.size), a, 0.0,
                      quad.tau_min, quad.tau_max)
    W = prof.weight_matrix(s_arr)
    pairs = max(quad.mc_samples // 2, 1)
    Z = point_rng(quad.mc_seed, point_index).standard_normal((pairs, pair.N))
    F = np.zeros((s_arr.size, pairs))
    step = max(1, 2_000_000 // pairs)
    for lo in range(0, len(table), step):
        sub = table.subset(slice(lo, lo + step))
        h = 0.5 * (_mc_samples(u, psi, X, t, sub, Z) + _mc_samples(u, psi, X, t, sub, -Z)) - base
        F += W[:, lo:lo + step] @ h
    est = F.mean(axis=1) + prof.near_piece(s_arr)
    se = F.std(axis=1, ddof=1) / np.sqrt(pairs) if pairs > 1 else np.zeros(s_arr.size)
    return est, se


def _scale_K(s):
    return -s / np.vectorize(gamma_fn)(1.0 - s)


def _finish(values, scalar):
    return float(values[0]) if scalar else values


def frac_K(pair, u, X, t, s, quad=None, engine="auto"):
    """``(-K)^s u(X, t)``; `s` may be a scalar or a sequence of orders."""
    s_arr, scalar = _orders(s)
    if engine == "mc":
        return _finish(frac_K_mc(pair, u, X, t, s_arr, quad)[0], scalar)
    prof = tau_profile(pair, u, None, X, t, quad, engine)
    return _finish(_scale_K(s_arr) * prof.integrate(s_arr), scalar)


def frac_K_mc(pair, u, X, t, s, quad=None, point_index=0):
    """Monte Carlo ``(-K)^s u(X, t)`` with standard errors (arrays over `s`)."""
    s_arr, _ = _orders(s)
    est, se = mc_tau_integral(pair, u, None, X, t, s_arr, quad, point_index)
    c = _scale_K(s_arr)
    return c * est, np.abs(c) * se


def frac_K_phi(pair, u, phi, X, t, s, quad=None, engine="auto"):
    """``(-K)^s phi(u)(X, t)``."""
    s_arr, scalar = _orders(s)
    _check_range(_space_time(u, pair), phi)
    prof = tau_profile(pair, u, phi, X, t, quad, engine)
    return _finish(_scale_K(s_arr) * prof.integrate(s_arr), scalar)


def carre_evolutive(pair, u, X, t, s, quad=None, engine="auto"):
    """The nonlocal carre du champ ``Gamma^K_s(u)(X, t)``; nonnegative."""
    s_arr, scalar = _orders(s)
    u = _space_time(u, pair)
    u0 = float(u(np.append(np.asarray(X, dtype=float), t)))
    prof = tau_profile(pair, u, shifted_square(u0), X, t, quad, engine)
    return _finish(-0.5 * _scale_K(s_arr) * prof.integrate(s_arr), scalar)


def remainder(pair, u, phi, X, t, s, quad=None, engine="auto"):
    """Chain-rule remainder ``(-K)^s phi(u) - phi'(u)(-K)^s u + phi''(u) Gamma^K_s(u)``.

    The three semigroup integrals are merged into one with integrand the
    second-order Taylor remainder of `phi` about ``u(X, t)``, which is the
    same quantity without the cancellation between the three terms.
    """
    s_arr, scalar = _orders(s)
    u = _space_time(u, pair)
    _check_range(u, phi)
    if u.is_constant():
        return _finish(np.zeros(s_arr.size), scalar)
    u0 = float(u(np.append(np.asarray(X, dtype=float), t)))
    prof = tau_profile(pair, u, TaylorRemainder(phi, u0), X, t, quad, engine)
    return _finish(_scale_K(s_arr) * prof.integrate(s_arr), scalar)


def remainder_mc(pair, u, phi, X, t, s, quad=None, point_index=0):
    """Monte Carlo remainder with standard errors (arrays over `s`)."""
    s_arr, _ = _orders(s)
    u = _space_time(u, pair)
    _check_range(u, phi)
    if u.is_constant():
        return np.zeros(s_arr.size), np.zeros(s_arr.size)
    u0 = float(u(np.append(np.asarray(X, dtype=float), t)))
    est, se = mc_tau_integral(pair, u, TaylorRemainder(phi, u0), X, t, s_arr, quad, point_index)
    c = _scale_K(s_arr)
    return c * est, np.abs(c) * se


def remainder_terms(pair, u, phi, X, t, s, quad=None, engine="auto"):
    """The three terms ``((-K)^s phi(u), phi'(u)(-K)^s u, phi''(u) Gamma^K_s(u))``."""
    s_arr, scalar = _orders(s)
    u = _space_time(u, pair)
    _check_range(u, phi)
    u0 = float(u(np.append(np.asarray(X, dtype=float), t)))
    cache = _mesh_and_table(pair, u, t, quad or QuadratureSpec())
    c = _scale_K(s_arr)
    lap_phi = c * tau_profile(pair, u, phi, X, t, quad, engine, cache).integrate(s_arr)
    lap_u = c * tau_profile(pair, u, None, X, t, quad, "auto", cache).integrate(s_arr)
    car = -0.5 * c * tau_profile(pair, u, shifted_square(u0), X, t, quad, "auto",
                                 cache).integrate(s_arr)
    out = (lap_phi, float(phi.d1(u0)) * lap_u, float(phi.d2(u0)) * car)
    return tuple(_finish(v, scalar) for v in out)


def _besov_value(pair, u, alpha, p, quad, lo, hi, order, panels):
    N = pair.N
    nodes, weights = box_rule(lo, hi, order, panels)
    t_values = np.unique(nodes[:, N])
    bumps = [b for tv in t_values for b in _time_bumps(u, tv)]
    mesh = tau_mesh(quad, bumps)
    taus = np.append(mesh.nodes, quad.tau_max)
    table = kernel_table(pair, taus, quad.k_order)
    e = 0.5 * alpha * p
    W = mesh.weights * mesh.nodes ** (-1.0 - e)
    total = 0.0
    for P, w in zip(nodes, weights):
        X, t = P[:N], P[N]
        u0 = float(u(P))
        if p == 2:
            g = profile(pair, u, shifted_square(u0), X, t, table, "exact", quad)
            slope = 2.0 * float(u.grad(P)[:N] @ pair.Q @ u.grad(P)[:N])
            near = slope * quad.tau_min ** (1.0 - e) / (1.0 - e)
        else:
            engine = "hermite" if N <= HERMITE_MAX_DIM else None
            if engine is None:
                raise InvalidInputError(f"p != 2 needs N <= {HERMITE_MAX_DIM}")
            g = profile(pair, u, _AbsPower(u0, p), X, t, table, engine, quad)
            k = 0.5 * p
            c = g[0] / mesh.nodes[0] ** k
            near = c * quad.tau_min ** (k - e) / (k - e)
        total += w * (W @ g[:-1] + near + g[-1] * quad.tau_max ** (-e) / e)
    return max(total, 0.0) ** (1.0 / p)


def besov_seminorm(pair, u, alpha, p, quad=None, box=None, order=6, panels=2,
                   check_truncation=False):
    """Evolutive Besov seminorm of `u` on a bounded (X, t) box.

    Parameters
    ----------
    alpha : smoothness, ``0 < alpha < 1``
    p : integrability exponent ``>= 1``
    box : ``(lo, hi)`` corners in R^{N+1}; defaults to the support box of `u`.
    order, panels : Gauss-Legendre order and panels per box axis.
    check_truncation : recompute on the doubled box and raise
        :class:`TruncationError` if the value moves by more than 1%.
    """
    quad = quad or QuadratureSpec()
    if not (0.0 < alpha < 1.0):
        raise InvalidInputError("alpha must lie in (0, 1)")
    if not p >= 1.0:
        raise InvalidInputError("p must be >= 1")
    u = _space_time(u, pair)
    if u.is_constant():
        return 0.0
    if box is None:
        box = u.support_box()
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    if lo.shape != (pair.N + 1,) or hi.shape != lo.shape or not np.all(lo < hi):
        raise InvalidInputError("box must be two corners in R^{N+1} with lo < hi")
    val = _besov_value(pair, u, alpha, p, quad, lo, hi, order, panels)
    if check_truncation:
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        big = _besov_value(pair, u, alpha, p, quad, mid - 2 * half, mid + 2 * half, order,
                           2 * panels)
        if abs(big - val) > 0.01 * abs(big):
            raise TruncationError(f"box doubling moved the seminorm from {val:.6g} to {big:.6g}")
    return val


def kernel_scaling_integral(N, s, r, quad=None):
    """``int_0^inf tau^{-1-s-N/2} exp(-r^2 / 4 tau) dtau`` and its closed form.

    Returns ``(numerical, closed_form)`` with closed form
    ``2^{N+2s} Gamma((N+2s)/2) / r^{N+2s}``.
    """
    quad = quad or QuadratureSpec()
    s = check_order(s)
    if not r > 0:
        raise InvalidInputError("r must be positive")
    mesh = tau_mesh(quad)
    k = s + 0.5 * N
    tau = mesh.nodes
    body = mesh.weights @ (tau ** (-1.0 - k) * np.exp(-r * r / (4.0 * tau)))
    tail = quad.tau_max ** (-k) / k
    closed = 2.0 ** (N + 2 * s) * gamma_fn(0.5 * N + s) / r ** (N + 2 * s)
    return float(body + tail), float(closed)
