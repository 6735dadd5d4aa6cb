"""The Gaussian kernel and the two semigroups built from it.

``p(X, Y, t)`` is the Gaussian density in ``Y`` with mean ``e^{tB} X`` and
covariance ``2t K(t)``.  ``P_t f(X) = int p(X, Y, t) f(Y) dY`` is the
stationary semigroup and ``P^K_tau u(X, t) = int p(X, Y, tau) u(Y, t - tau) dY``
the evolutive one.

Three engines evaluate these integrals:

``exact``
    closed-form Gaussian expectation; needs the integrand in the closed
    polynomial-times-Gaussian class.
``hermite``
    tensor Gauss-Hermite quadrature in the whitened variable ``Z`` with
    ``Y = e^{tB} X + L Z`` and ``L L^T = 2t K(t)``.  When the integrand is
    localized, the Gaussian weight is tilted toward the integrand's
    Gaussian envelope so that wide kernels (large ``t``) stay resolved.
``mc``
    plain Monte Carlo over the same whitened variable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hormander import (HypoellipticityError, InvalidInputError, batch_cholesky,
                        covariance_batch, covariance_K, mat_exp)
from .phi import identity
from .quadrature import QuadratureSpec, hermite_rule
from .testfn import _slice_term, Tilt, whitened_expectation

__all__ = [
    "QuadratureSpec",
    "KernelEval",
    "KernelTable",
    "kernel",
    "kernel_table",
    "apply_Pt",
    "apply_PK",
    "mc_apply_PK",
    "cauchy_residual",
    "dual_mass",
    "generator",
    "profile",
    "point_rng",
    "ENGINES",
]

ENGINES = ("exact", "hermite", "mc")
HERMITE_MAX_DIM = 4
_CHUNK_POINTS = 2_000_000
TILT = 1.0


@dataclass(frozen=True)
class KernelEval:
    log_density: float
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class KernelTable:
    """Kernel data on a grid of times: ``e^{tB}``, ``L`` with ``L L^T = 2t K(t)``."""

    times: np.ndarray
    expB: np.ndarray
    L: np.ndarray
    logdet_tK: np.ndarray

    def __len__(self):
        return self.times.size

    def means(self, X):
        return self.expB @ np.asarray(X, dtype=float)

    def subset(self, idx):
        return KernelTable(self.times[idx], self.expB[idx], self.L[idx], self.logdet_tK[idx])


def kernel_table(pair, times, k_order=32):
    """Batch kernel data; raises HypoellipticityError if any ``K(t)`` degenerates."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    G = covariance_batch(pair, times, k_order)
    L, logdet, ok, rel = batch_cholesky(2.0 * G)
    if not np.all(ok):
        i = int(np.flatnonzero(~ok)[0])
        t = float(times[i])
        ev = float(np.linalg.eigvalsh(G[i] / t)[0])
        raise HypoellipticityError(
            f"K(t) is not positive definite at t={t:g} (min eigenvalue {ev:.3e})", t=t, min_eig=ev)
    logdet_tK = logdet - pair.N * np.log(2.0)
    return KernelTable(times, mat_exp(pair.B, times), L, logdet_tK)


def kernel(pair, X, Y, t, k_order=32):
    """Log-density of the fundamental solution ``p(X, Y, t)``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != (pair.N,) or Y.shape != (pair.N,):
        raise InvalidInputError("X and Y must lie in R^N")
    cov = covariance_K(pair, t, k_order)
    mean = mat_exp(pair.B, t) @ X
    # chol is the factor of t K(t); the Gaussian covariance in Y is 2t K(t)
    w = np.linalg.solve(cov.chol, Y - mean)
    N = pair.N
    logp = -0.5 * N * np.log(4.0 * np.pi) - 0.5 * cov.logdet - 0.25 * (w @ w)
    return KernelEval(float(logp), mean, 2.0 * t * cov.K_t)


# ---------------------------------------------------------------------------
# Integrands ``psi(u(Y, t - tau))``.

def _space_time(u, pair):
    if u.d == pair.N:
        return u.extend_time()
    if u.d != pair.N + 1:
        raise InvalidInputError(f"function dimension {u.d} does not match N={pair.N}")
    return u


def _closed_form(u, psi):
    coeffs = psi.poly_coeffs()
    if coeffs is None:
        return None
    return u.compose_poly(coeffs)


def _exact_values(F, X, t, table):
    """``int p(X, Y, tau_j) F(Y, t - tau_j) dY`` for all table times."""
    sigma = t - table.times
    m = table.means(X)
    total = np.zeros(len(table))
    for term in F.terms:
        A, b, c, poly = _slice_term(term, sigma)
        if not poly:
            continue
        total = total + whitened_expectation(A, b, c, poly, m, table.L)
    return total


def _envelope(u, sigma, rho=1):
    """Tilt parameters (a_e, centers) of the Gaussian envelope of ``u(., sigma)**rho``.

    Returns None when some term does not decay in space.
    """
    N = u.d - 1
    mins, centers, logw = [], [], []
    for term in u.terms:
        A = term.A[:N, :N]
        ev = np.linalg.eigvalsh(A)[0]
        if not ev > 0:
            return None
        _, b, c, poly = _slice_term(term, sigma)
        ystar = np.linalg.solve(2.0 * A, b.T).T
        amp = sum(np.abs(v) for v in poly.values())
        with np.errstate(divide="ignore"):
            lw = c + 0.5 * np.einsum("ji,ji->j", b, ystar) + np.log(amp)
        mins.append(ev)
        centers.append(ystar)
        logw.append(lw)
    logw = np.array(logw)
    logw = np.where(np.isfinite(logw), logw, -np.inf)
    top = logw.max(axis=0)
    top = np.where(np.isfinite(top), top, 0.0)
    w = np.exp(logw - top)
    w = w / np.maximum(w.sum(axis=0), 1e-300)
    center = np.einsum("kj,kji->ji", w, np.array(centers))
    return TILT * rho * min(mins), center


def _hermite_values(u, psi, X, t, table, order):
    """Gauss-Hermite values of ``P^K_tau[psi(u)](X, t)`` on the table times."""
    N = u.d - 1
    if N > HERMITE_MAX_DIM:
        raise InvalidInputError(f"Hermite grids are limited to N <= {HERMITE_MAX_DIM}; use mc")
    z, wz = hermite_rule(order, N)
    G = z.shape[0]
    out = np.empty(len(table))
    step = max(1, _CHUNK_POINTS // G)
    for lo in range(0, len(table), step):
        sub = table.subset(slice(lo, lo + step))
        sigma = t - sub.times
        m = sub.means(X)
        env = _envelope(u, sigma, psi.decay_order())
        if env is None:
            Y = m[:, None, :] + z @ np.swapaxes(sub.L, -1, -2)
            pts = np.concatenate([Y, np.broadcast_to(sigma[:, None, None], Y.shape[:2] + (1,))], -1)
            vals = psi(u(pts))
            out[lo:lo + step] = vals @ wz
            continue
        a_e, c_env = env
        base = float(psi(0.0))
        L = sub.L
        dm = m - c_env
        T = Tilt(a_e * np.eye(N), L)
        e = np.sqrt(a_e) * dm
        mu = T.hinv_apply(-np.sqrt(2.0) * np.einsum("jki,jk->ji", T.G, e))
        C = T.root()
        logZ = -0.5 * T.logdet - T.dual_quad(e)
        zz = mu[:, None, :] + z @ np.swapaxes(C, -1, -2)
        off = dm[:, None, :] + zz @ np.swapaxes(L, -1, -2)
        Y = c_env[:, None, :] + off
        pts = np.concatenate([Y, np.broadcast_to(sigma[:, None, None], Y.shape[:2] + (1,))], -1)
        with np.errstate(under="ignore"):
            g = psi(u(pts)) - base
        # g underflows to 0 exactly where the tilt weight would overflow
        expo = np.minimum(a_e * (off * off).sum(-1) + logZ[:, None], 700.0)
        vals = np.where(g != 0.0, g * np.exp(expo), 0.0)
        out[lo:lo + step] = base + vals @ wz
    return out


def point_rng(seed, point_index=0):
    """Generator for one evaluation point, derived from the base seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(point_index)]))


def _eval_on_slices(u, sigma, Y):
    """``u(Y[j, k], sigma[j])`` for points ``Y`` of shape (n_times, n_points, N)."""
    out = np.zeros(Y.shape[:-1])
    for term in u.terms:
        A, b, c, poly = _slice_term(term, sigma)
        expo = -((Y @ A) * Y).sum(-1) + (Y @ b[:, :, None])[..., 0] + c[:, None]
        pv = np.zeros(Y.shape[:-1])
        for e, coef in poly.items():
            mono = np.broadcast_to(np.asarray(coef, dtype=float), sigma.shape)[:, None]
            for i, k in enumerate(e):
                if k:
                    mono = mono * Y[..., i] ** k
            pv = pv + mono
        out += pv * np.exp(expo)
    return out


def _mc_samples(u, psi, X, t, table, Z):
    """Values ``psi(u(Y_j(Z), t - tau_j))`` with shape (len(table), n_samples)."""
    sigma = t - table.times
    Y = table.means(X)[:, None, :] + Z @ np.swapaxes(table.L, -1, -2)
    with np.errstate(under="ignore"):
        return psi(_eval_on_slices(u, sigma, Y))


def profile(pair, u, psi, X, t, table, engine="exact", quad=None):
    """``P^K_tau[psi(u)](X, t)`` for every time of `table`.

    Parameters
    ----------
    u : TestFunction on R^{N+1} (or R^N, extended as time-independent)
    psi : PhiFunction or None for the identity
    engine : ``exact`` or ``hermite``
    """
    quad = quad or QuadratureSpec()
    psi = psi or identity()
    u = _space_time(u, pair)
    X = np.asarray(X, dtype=float)
    if engine == "exact":
        F = _closed_form(u, psi)
        if F is None:
            raise InvalidInputError(f"exact engine needs a polynomial nonlinearity, got {psi.name}")
        return _exact_values(F, X, t, table)
    if engine == "hermite":
        return _hermite_values(u, psi, X, t, table, quad.hermite_order)
    raise InvalidInputError(f"unknown deterministic engine {engine!r}")


def resolve_engine(psi, engine, N):
    if engine not in ("auto",) + ENGINES:
        raise InvalidInputError(f"unknown engine {engine!r}")
    if engine != "auto":
        return engine
    if psi is None or psi.poly_coeffs() is not None:
        return "exact"
    return "hermite" if N <= HERMITE_MAX_DIM else "mc"


# ---------------------------------------------------------------------------
# Public semigroup evaluations.

def apply_Pt(pair, f, X, t, quad=None, engine="exact"):
    """``P_t f(X)`` for a function `f` on R^N."""
    quad = quad or QuadratureSpec()
    if f.d != pair.N:
        raise InvalidInputError("f must be a function on R^N")
    if not t > 0:
        raise InvalidInputError("t must be positive")
    return apply_PK(pair, f.extend_time(), X, 0.0, t, quad, engine)


def apply_PK(pair, u, X, t, tau, quad=None, engine="exact", psi=None):
    """``P^K_tau[psi(u)](X, t)``; `psi` defaults to the identity."""
    quad = quad or QuadratureSpec()
    if not tau > 0:
        raise InvalidInputError("tau must be positive")
    table = kernel_table(pair, [tau], quad.k_order)
    if engine == "mc":
        est, _ = mc_apply_PK(pair, u, X, t, tau, quad, psi=psi)
        return est
    return float(profile(pair, u, psi, X, t, table, engine, quad)[0])


def mc_apply_PK(pair, u, X, t, tau, quad=None, psi=None, point_index=0):
    """Monte Carlo estimate of ``P^K_tau[psi(u)](X, t)`` with its standard error.

    Samples ``Y = e^{tau B} X + L Z`` with ``L L^T = 2 tau K(tau)``.
    """
    quad = quad or QuadratureSpec()
    psi = psi or identity()
    u = _space_time(u, pair)
    table = kernel_table(pair, [tau], quad.k_order)
    rng = point_rng(quad.mc_seed, point_index)
    Z = rng.standard_normal((quad.mc_samples, pair.N))
    vals = _mc_samples(u, psi, np.asarray(X, dtype=float), t, table, Z)[0]
    n = vals.size
    se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(vals.mean()), se


def generator(pair, u, X, t, psi=None):
    """``K[psi(u)](X, t) = psi'(u) K u + psi''(u) <Q grad u, grad u>`` exactly."""
    psi = psi or identity()
    u = _space_time(u, pair)
    N = pair.N
    P = np.append(np.asarray(X, dtype=float), t)
    g = u.grad(P)
    H = u.hessian(P)
    gx = g[:N]
    Ku = np.trace(pair.Q @ H[:N, :N]) + (pair.B @ P[:N]) @ gx - g[N]
    val = float(u(P))
    return float(psi.d1(val) * Ku + psi.d2(val) * (gx @ pair.Q @ gx))


def cauchy_residual(pair, u, X, t, tau, h, quad=None):
    """``|d_tau U - K U|`` for ``U(X, t, tau) = P^K_tau u(X, t)``.

    ``d_tau`` is a central difference with step `h`; the spatial and time
    derivatives are pushed through the exact Gaussian expectation.
    """
    quad = quad or QuadratureSpec()
    if not (0 < h <= tau / 2):
        raise InvalidInputError("step must satisfy 0 < h <= tau/2")
    u = _space_time(u, pair)
    N = pair.N
    X = np.asarray(X, dtype=float)
    table = kernel_table(pair, [tau - h, tau, tau + h], quad.k_order)

    def P(F, idx):
        return _exact_values(F, X, t, table.subset([idx]))[0]

    dU = (P(u, 2) - P(u, 0)) / (2.0 * h)
    E = table.expB[1]
    grad_y = np.array([P(u.partial(i), 1) for i in range(N)])
    hess_y = np.array([[P(u.partial(i).partial(j), 1) for j in range(N)] for i in range(N)])
    dt = P(u.partial(N), 1)
    grad_x = E.T @ grad_y
    hess_x = E.T @ hess_y @ E
    KU = np.trace(pair.Q @ hess_x) + (pair.B @ X) @ grad_x - dt
    return float(abs(dU - KU))


def dual_mass(pair, Y, t, quad=None):
    """``int p(X, Y, t) dX`` by Gauss-Hermite in the whitened variable.

    ``X = e^{-tB}(Y - L Z)`` has Jacobian ``e^{-t tr B} det L``; the kernel is
    evaluated through its log-density, so the whole chain (matrix
    exponential, covariance, determinant) is exercised.
    """
    quad = quad or QuadratureSpec()
    Y = np.asarray(Y, dtype=float)
    N = pair.N
    table = kernel_table(pair, [t], quad.k_order)
    L = table.L[0]
    Einv = mat_exp(pair.B, -t)
    z, w = hermite_rule(min(quad.hermite_order, 12), N)
    Xs = (Einv @ (Y[None, :] - z @ L.T).T).T
    m = (table.expB[0] @ Xs.T).T
    r = np.linalg.solve(L, (Y[None, :] - m).T).T
    logp = -0.5 * N * np.log(2.0 * np.pi) - np.log(np.diag(L)).sum() - 0.5 * (r * r).sum(-1)
    logjac = -t * pair.trace_B + np.log(np.abs(np.diag(L))).sum()
    logphi = -0.5 * N * np.log(2.0 * np.pi) - 0.5 * (z * z).sum(-1)
    return float(w @ np.exp(logp + logjac - logphi))
