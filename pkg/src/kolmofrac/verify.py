"""Executable checks of the nonlocal chain-rule identities.

Each check evaluates both sides of an identity or inequality at a list of
space-time points and orders ``s`` and returns a :class:`CheckReport`.
Rows are ordered by ``s`` ascending, then by point index.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .balakrishnan import (RangeViolationError, _check_range, _mesh_and_table, _orders,
                           _scale_K, carre_evolutive, frac_K_mc, remainder, remainder_mc,
                           tau_profile)
from .fractional import Composed, carre_direct, frac_laplacian_direct
from .hormander import InvalidInputError, heat_pair
from .phi import PhiFunction, power, shifted_square
from .quadrature import QuadratureSpec
from .semigroup import HERMITE_MAX_DIM, _space_time, apply_Pt, dual_mass
from .testfn import TestFunction, constant, time_slice

__all__ = [
    "ReportRow",
    "CheckReport",
    "default_points",
    "digest",
    "richardson",
    "check_square_rule",
    "check_convexity_inequality",
    "check_tind_reduction",
    "check_s_limits",
    "check_general_chain_rule",
    "check_engine_agreement",
    "check_kernel_mass",
    "S_GRID",
]

S_GRID = (0.9, 0.95, 0.99)


@dataclass(frozen=True)
class ReportRow:
    check: str
    s: float
    point: int
    lhs: float
    rhs: float
    residual: float
    tolerance: float
    verdict: str
    engine: str
    function: str = ""
    phi: str = ""
    reason: str = ""

    @property
    def passed(self):
        return self.verdict == "pass"


@dataclass(frozen=True)
class CheckReport:
    name: str
    digest: str
    rows: tuple = field(default_factory=tuple)
    tolerance: str = ""

    @property
    def verdict(self):
        return "pass" if all(r.passed for r in self.rows) else "fail"

    @property
    def passed(self):
        return self.verdict == "pass"

    @property
    def residuals(self):
        return np.array([r.residual for r in self.rows])


# ---------------------------------------------------------------------------
# Helpers.

def default_points(N, count=5):
    """Deterministic (X, t) points: origin, half-unit axes, then generic points."""
    d = N + 1
    pts = [np.zeros(d)]
    for i in range(d):
        e = np.zeros(d)
        e[i] = 0.5
        pts.append(e)
    k = np.arange(d)
    pts.append(0.3 * (-1.0) ** k / (k + 1))
    pts.append(-0.4 * (-1.0) ** k / (k + 2) + 0.05)
    return [(p[:N].copy(), float(p[N])) for p in pts[:count]]


def _canon(obj):
    if isinstance(obj, TestFunction):
        return {"d": obj.d, "terms": [[list(map(list, t.poly)), t.A.tolist(), t.b.tolist(), t.c]
                                      for t in obj.terms]}
    if isinstance(obj, PhiFunction):
        return {"phi": obj.name, "interval": list(obj.interval)}
    if isinstance(obj, QuadratureSpec):
        return obj.as_dict()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [_canon(o) for o in obj]
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if hasattr(obj, "Q") and hasattr(obj, "B"):
        return {"Q": obj.Q.tolist(), "B": obj.B.tolist()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def digest(**config):
    """SHA-256 of a canonical JSON rendering of a check configuration."""
    text = json.dumps(_canon(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def richardson(h, values):
    """Value at ``h = 0`` of the interpolating polynomial through ``(h, values)``."""
    h = np.asarray(h, dtype=float)
    values = np.asarray(values, dtype=float)
    out = 0.0
    for i in range(h.size):
        others = np.delete(h, i)
        out += values[i] * np.prod(others / (others - h[i]))
    return float(out)


def _points(points, N):
    out = []
    for X, t in points:
        X = np.atleast_1d(np.asarray(X, dtype=float))
        if X.shape != (N,):
            raise InvalidInputError(f"point {X} is not in R^{N}")
        out.append((X, float(t)))
    return out


def _row(check, s, i, lhs, rhs, tol, engine, residual=None, ok=None, **kw):
    res = abs(lhs - rhs) if residual is None else residual
    if ok is None:
        ok = bool(res <= tol)
    return ReportRow(check, float(s), i, float(lhs), float(rhs), float(res), float(tol),
                     "pass" if ok else "fail", engine, **kw)


def _sorted(rows):
    return tuple(sorted(rows, key=lambda r: (r.s, r.point)))


def _hermite_or_exact(N):
    return "hermite" if N <= HERMITE_MAX_DIM else "exact"


# ---------------------------------------------------------------------------
# Checks.

def check_square_rule(pair, u, points, s, quad=None):
    """``(-K)^s(u^2) = 2u (-K)^s u - 2 Gamma^K_s(u)``.

    The left side runs on the Gauss-Hermite engine, the right side on the
    closed-form engine, so the two sides share no integration code beyond
    the tau mesh.
    """
    quad = quad or QuadratureSpec()
    s_arr, _ = _orders(s)
    u = _space_time(u, pair)
    pts = _points(points, pair.N)
    left = _hermite_or_exact(pair.N)
    rows = []
    for i, (X, t) in enumerate(pts):
        cache = _mesh_and_table(pair, u, t, quad)
        u0 = float(u(np.append(X, t)))
        c = _scale_K(s_arr)
        lhs = c * tau_profile(pair, u, power(2), X, t, quad, left, cache).integrate(s_arr)
        lap = c * tau_profile(pair, u, None, X, t, quad, "exact", cache).integrate(s_arr)
        car = -0.5 * c * tau_profile(pair, u, shifted_square(u0), X, t, quad, "exact",
                                     cache).integrate(s_arr)
        rhs = 2.0 * u0 * lap - 2.0 * car
        for k, sv in enumerate(s_arr):
            tol = max(1e-6, 1e-4 * abs(lhs[k]))
            rows.append(_row("square_rule", sv, i, lhs[k], rhs[k], tol, f"{left}|exact"))
    name = "square_rule"
    return CheckReport(name, digest(check=name, pair=pair, u=u, s=s_arr, points=pts, quad=quad),
                       _sorted(rows), "max(1e-6, 1e-4*|lhs|)")


def check_convexity_inequality(pair, u, phi, points, s, quad=None, engine="auto"):
    """``(-K)^s phi(u) <= phi'(u) (-K)^s u`` for convex `phi`.

    ``residual`` is the violation ``max(lhs - rhs, 0)``; the slack is
    ``1e-6 (1 + |rhs|)``.
    """
    quad = quad or QuadratureSpec()
    if not phi.convex:
        raise InvalidInputError(f"{phi.name} is not flagged convex")
    s_arr, _ = _orders(s)
    u = _space_time(u, pair)
    _check_range(u, phi)
    pts = _points(points, pair.N)
    rows = []
    for i, (X, t) in enumerate(pts):
        cache = _mesh_and_table(pair, u, t, quad)
        u0 = float(u(np.append(X, t)))
        c = _scale_K(s_arr)
        prof = tau_profile(pair, u, phi, X, t, quad, engine, cache)
        eng = "exact" if engine == "auto" and phi.poly_coeffs() is not None else (
            engine if engine != "auto" else _hermite_or_exact(pair.N))
        lhs = c * prof.integrate(s_arr)
        rhs = float(phi.d1(u0)) * c * tau_profile(pair, u, None, X, t, quad, "exact",
                                                   cache).integrate(s_arr)
        for k, sv in enumerate(s_arr):
            tol = 1e-6 * (1.0 + abs(rhs[k]))
            rows.append(_row("convexity", sv, i, lhs[k], rhs[k], tol, eng,
                             residual=max(lhs[k] - rhs[k], 0.0), phi=phi.name))
    name = "convexity"
    return CheckReport(name, digest(check=name, pair=pair, u=u, phi=phi, s=s_arr, points=pts,
                                    quad=quad), _sorted(rows), "1e-6*(1+|rhs|)")


def check_tind_reduction(v, points, s, quad=None):
    """Heat operator, ``u(X, t) = v(X)``: evolutive and direct carre du champ agree."""
    quad = quad or QuadratureSpec()
    s_arr, _ = _orders(s)
    if v.d not in (1, 2, 3):
        raise InvalidInputError("the direct carre du champ needs n <= 3")
    pair = heat_pair(v.d)
    u = v.extend_time()
    pts = _points(points, v.d)
    rows = []
    for i, (X, t) in enumerate(pts):
        lhs = np.atleast_1d(carre_evolutive(pair, u, X, t, s_arr, quad, "exact"))
        prof_rhs = [carre_direct(v, X, sv, quad) for sv in s_arr]
        for k, sv in enumerate(s_arr):
            rhs = prof_rhs[k]
            rows.append(_row("tind_reduction", sv, i, lhs[k], rhs, 1e-4 * (1.0 + abs(rhs)),
                             "exact|direct"))
    name = "tind_reduction"
    return CheckReport(name, digest(check=name, v=v, s=s_arr, points=pts, quad=quad),
                       _sorted(rows), "1e-4*(1+|rhs|)")


def _limit_tol(target, scale):
    return 0.05 * abs(target) + 1e-4 * (1.0 + scale)


def check_s_limits(pair, u, points, s_grid=S_GRID, phi=None, quad=None):
    """Behaviour as ``s -> 1``.

    Three sub-checks per point, with ``v = u(., t)``:

    ``s_limits:carre``
        Richardson extrapolation of ``Gamma_s(v)(X)`` in ``1 - s`` against
        ``|grad v(X)|^2`` within 5%.
    ``s_limits:local``
        extrapolated ``-(-Delta)^s phi(v)(X)`` against
        ``phi'(v) Delta v + phi''(v) |grad v|^2`` within 5%.
    ``s_limits:remainder``
        ``|R^K_s(u; phi)(X, t)|`` strictly decreasing along `s_grid`.

    The first two rows carry ``s = 1``; remainder rows carry each ``s`` of
    the grid after the first, compared with its predecessor.
    """
    quad = quad or QuadratureSpec()
    phi = phi or power(3)
    s_arr, _ = _orders(s_grid)
    if s_arr.size < 2 or np.any(np.diff(s_arr) <= 0):
        raise InvalidInputError("s_grid must be increasing with at least two values")
    u = _space_time(u, pair)
    _check_range(u, phi)
    N = pair.N
    pts = _points(points, N)
    h = 1.0 - s_arr
    rows = []
    quadratic = phi.kind == "quadratic"
    for i, (X, t) in enumerate(pts):
        v = time_slice(u, t)
        if N <= 3:
            g = np.asarray(v.grad(X))
            target = float(g @ g)
            vals = [carre_direct(v, X, sv, quad) for sv in s_arr]
            ext = richardson(h, vals)
            scale = float(v(X)) ** 2
            rows.append(_row("s_limits:carre", 1.0, i, ext, target, _limit_tol(target, scale),
                             "direct"))
            w = Composed(phi, v)
            target = w.laplacian(X)
            vals = [-frac_laplacian_direct(w, X, sv, quad) for sv in s_arr]
            ext = richardson(h, vals)
            rows.append(_row("s_limits:local", 1.0, i, ext, target,
                             _limit_tol(target, float(w(X)) ** 2), "direct", phi=phi.name))
        eng = _hermite_or_exact(N) if phi.poly_coeffs() is None else "exact"
        R = np.abs(np.atleast_1d(remainder(pair, u, phi, X, t, s_arr, quad, eng)))
        trivial = quadratic or u.is_constant()
        for k in range(1, s_arr.size):
            diff = R[k] - R[k - 1]
            ok = diff < 0 or (trivial and R[k] <= 1e-6)
            rows.append(_row("s_limits:remainder", s_arr[k], i, R[k], R[k - 1], 0.0, eng,
                             residual=diff, ok=ok, phi=phi.name,
                             reason="" if not trivial else "remainder vanishes identically"))
    name = "s_limits"
    return CheckReport(name, digest(check=name, pair=pair, u=u, phi=phi, s=s_arr, points=pts,
                                    quad=quad), _sorted(rows),
                       "limits: 0.05*|target| + 1e-4*(1+value^2); remainder: strict decrease")


def check_general_chain_rule(pair, u, phi, points, s, quad=None):
    """Remainder of the general chain rule.

    For quadratic `phi` the remainder must vanish to 1e-6.  Otherwise the
    deterministic remainder is compared with an independent Monte Carlo
    estimate, within four standard errors.
    """
    quad = quad or QuadratureSpec()
    s_arr, _ = _orders(s)
    u = _space_time(u, pair)
    _check_range(u, phi)
    pts = _points(points, pair.N)
    rows = []
    name = "general_chain_rule"
    if phi.kind == "quadratic":
        eng = _hermite_or_exact(pair.N)
        for i, (X, t) in enumerate(pts):
            R = np.atleast_1d(remainder(pair, u, phi, X, t, s_arr, quad, eng))
            for k, sv in enumerate(s_arr):
                rows.append(_row(name, sv, i, R[k], 0.0, 1e-6, eng, phi=phi.name))
    else:
        eng = "exact" if pair.N > HERMITE_MAX_DIM else "hermite"
        if eng == "exact" and phi.poly_coeffs() is None:
            raise InvalidInputError(f"no deterministic engine for {phi.name} with N > 4")
        for i, (X, t) in enumerate(pts):
            R = np.atleast_1d(remainder(pair, u, phi, X, t, s_arr, quad, eng))
            est, se = remainder_mc(pair, u, phi, X, t, s_arr, quad, point_index=i)
            for k, sv in enumerate(s_arr):
                rows.append(_row(name, sv, i, R[k], est[k], 4.0 * se[k], f"{eng}|mc",
                                 phi=phi.name))
    return CheckReport(name, digest(check=name, pair=pair, u=u, phi=phi, s=s_arr, points=pts,
                                    quad=quad), _sorted(rows),
                       "1e-6 for quadratic phi, else 4 standard errors")


def check_engine_agreement(pair, u, points, s, quad=None):
    """``(-K)^s u`` from Gauss-Hermite against Monte Carlo, within 4 standard errors."""
    from .balakrishnan import frac_K
    quad = quad or QuadratureSpec()
    s_arr, _ = _orders(s)
    if pair.N > HERMITE_MAX_DIM:
        raise InvalidInputError(f"Hermite grids need N <= {HERMITE_MAX_DIM}")
    u = _space_time(u, pair)
    pts = _points(points, pair.N)
    rows = []
    for i, (X, t) in enumerate(pts):
        lhs = np.atleast_1d(frac_K(pair, u, X, t, s_arr, quad, "hermite"))
        est, se = frac_K_mc(pair, u, X, t, s_arr, quad, point_index=i)
        for k, sv in enumerate(s_arr):
            rows.append(_row("engine_agreement", sv, i, lhs[k], est[k], 4.0 * se[k], "hermite|mc"))
    name = "engine_agreement"
    return CheckReport(name, digest(check=name, pair=pair, u=u, s=s_arr, points=pts, quad=quad),
                       _sorted(rows), "4 standard errors")


def check_kernel_mass(pair, points, times=(0.1, 1.0, 10.0), quad=None):
    """``int p dY = 1`` (1e-10) and ``int p dX = exp(-t tr B)`` (1e-6, relative).

    Rows are labelled by the kernel time in the ``s`` column.
    """
    quad = quad or QuadratureSpec()
    pts = _points(points, pair.N)
    one = constant(1.0, pair.N)
    rows = []
    for i, (X, _) in enumerate(pts):
        for tk in times:
            m = apply_Pt(pair, one, X, tk, quad)
            rows.append(_row("kernel_mass:forward", tk, i, m, 1.0, 1e-10, "exact"))
            target = math.exp(-tk * pair.trace_B)
            d = dual_mass(pair, X, tk, quad)
            rows.append(_row("kernel_mass:dual", tk, i, d, target, 1e-6 * target, "hermite"))
    name = "kernel_mass"
    return CheckReport(name, digest(check=name, pair=pair, times=list(times), points=pts,
                                    quad=quad), tuple(sorted(rows, key=lambda r: (r.s, r.point,
                                                                                  r.check))),
                       "1e-10 forward, 1e-6 relative dual")
