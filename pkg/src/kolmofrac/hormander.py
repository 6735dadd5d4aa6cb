"""Constant-coefficient linear algebra for Kolmogorov-type operators.

The operator class is ``K u = tr(Q D^2 u) + <BX, grad u> - d_t u`` with a
symmetric positive semidefinite ``Q``.  Everything downstream (the Gaussian
kernel, the semigroups, the fractional powers) is driven by the matrix
exponential ``e^{sB}`` and the covariance matrix

    K(t) = (1/t) int_0^t e^{sB} Q e^{sB^T} ds.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import lapack, solve_triangular

__all__ = [
    "InvalidInputError",
    "FactorizationError",
    "HypoellipticityError",
    "HormanderPair",
    "CovarianceMatrix",
    "SPDFactor",
    "mat_exp",
    "spd_factorize",
    "covariance_K",
    "covariance_batch",
    "covariance_crosscheck",
    "check_hormander",
    "heat_pair",
    "kolmogorov_pair",
]

TOL_SYM = 1e-12
SPD_RTOL = 1e-12
DEFAULT_K_ORDER = 32


class InvalidInputError(ValueError):
    """Raised for malformed numerical input (shapes, non-finite entries)."""


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a matrix is not numerically symmetric positive definite."""

    def __init__(self, message, pivot=None, min_eig=None):
        super().__init__(message)
        self.pivot = pivot
        self.min_eig = min_eig


class HypoellipticityError(FactorizationError):
    """Raised when the covariance matrix K(t) fails to be positive definite."""

    def __init__(self, message, t=None, min_eig=None, pivot=None):
        super().__init__(message, pivot=pivot, min_eig=min_eig)
        self.t = t


# ---------------------------------------------------------------------------
# Matrix exponential: scaling and squaring with the [13/13] Pade approximant.

_PADE13 = np.array([
    64764752532480000., 32382376266240000., 7771770303897600.,
    1187353796428800., 129060195264000., 10559470521600.,
    670442572800., 33522128640., 1323241920., 40840800.,
    960960., 16380., 182., 1.])
_THETA13 = 5.371920351148152


def _pade13(A):
    b = _PADE13
    ident = np.broadcast_to(np.eye(A.shape[-1]), A.shape)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    return U, V


def mat_exp(A, s=1.0):
    """Matrix exponential ``e^{sA}``.

    Parameters
    ----------
    A : array_like, shape (..., n, n)
        Real square matrix or stack of matrices.
    s : float or array_like
        Scalar multiplier, broadcast against the leading dimensions of `A`.

    Returns
    -------
    ndarray, shape broadcast(s, A[..., 0, 0]) + (n, n)

    Notes
    -----
    Each matrix is scaled by ``2**-k`` so that its 1-norm is below the
    degree-13 threshold, the Pade approximant is evaluated, and the result
    is squared ``k`` times.  Scaling is chosen per matrix in a batch.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise InvalidInputError(f"expected square matrices, got shape {A.shape}")
    s = np.asarray(s, dtype=float)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(s))):
        raise InvalidInputError("non-finite entries in matrix exponential input")
    M = s[..., None, None] * A
    lead = M.shape[:-2]
    n = M.shape[-1]
    M = M.reshape((-1, n, n))

    norms = np.abs(M).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        k = np.ceil(np.log2(norms / _THETA13))
    k = np.where(np.isfinite(k) & (k > 0), k, 0).astype(int)
    M = M / (2.0 ** k)[:, None, None]

    # Triangular structure (nilpotent Kolmogorov drifts) is preserved
    # exactly; otherwise roundoff in the zero triangle is amplified by the
    # squarings.
    if not np.any(np.triu(M, 1)):
        mask = np.tril(np.ones((n, n), dtype=bool))
    elif not np.any(np.tril(M, -1)):
        mask = np.triu(np.ones((n, n), dtype=bool))
    else:
        mask = None

    U, V = _pade13(M)
    R = np.linalg.solve(V - U, V + U)
    if mask is not None:
        R = np.where(mask, R, 0.0)
        diag = np.diagonal(M, axis1=-2, axis2=-1)
        idx = np.arange(n)
        R[:, idx, idx] = np.exp(diag)
    for step in range(int(k.max(initial=0))):
        active = k > step
        R[active] = R[active] @ R[active]
        if mask is not None:
            # exact diagonal of the partially squared exponential
            scale = 2.0 ** (step + 1)
            sub = R[active]
            sub[:, idx, idx] = np.exp(diag[active] * scale)
            R[active] = sub
    return R.reshape(lead + (n, n))


# ---------------------------------------------------------------------------
# SPD factorization.

@dataclass(frozen=True)
class SPDFactor:
    """Lower Cholesky factor of an SPD matrix with solve and log-determinant."""

    factor: np.ndarray
    logdet: float

    def solve(self, b):
        """Solve ``M x = b`` for the factored matrix ``M``."""
        y = solve_triangular(self.factor, b, lower=True)
        return solve_triangular(self.factor.T, y, lower=False)


def _check_square(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def _is_symmetric(M, tol=TOL_SYM):
    scale = max(np.abs(M).max(initial=0.0), np.finfo(float).tiny)
    return np.abs(M - M.T).max(initial=0.0) <= tol * scale


def spd_factorize(M):
    """Cholesky factorization of a symmetric positive definite matrix.

    The matrix is first equilibrated by its diagonal, ``C = D^-1/2 M D^-1/2``,
    and accepted only if ``min eig(C) > 1e-12 * max eig(C)``.  Equilibration
    makes the degeneracy test invariant under the anisotropic scalings that
    Kolmogorov covariances exhibit (``t`` against ``t**3``).

    Returns
    -------
    SPDFactor
        ``factor @ factor.T == M`` and ``logdet == log det M``.

    Raises
    ------
    FactorizationError
        With the failing pivot index when `M` is not numerically SPD.
    """
    M = _check_square(M)
    if not _is_symmetric(M):
        raise InvalidInputError("matrix is not symmetric")
    M = 0.5 * (M + M.T)
    d = np.diag(M)
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        i = int(bad[0])
        raise FactorizationError(f"non-positive diagonal at pivot {i}", pivot=i,
                                 min_eig=float(np.linalg.eigvalsh(M)[0]))
    r = np.sqrt(d)
    C = M / np.outer(r, r)
    Lc, info = lapack.dpotrf(C, lower=1, clean=1)
    if info != 0:
        i = int(info) - 1 if info > 0 else None
        raise FactorizationError(f"matrix is not positive definite (pivot {i})",
                                 pivot=i, min_eig=float(np.linalg.eigvalsh(M)[0]))
    ev = np.linalg.eigvalsh(C)
    if not ev[0] > SPD_RTOL * ev[-1]:
        i = int(np.argmin(np.diag(Lc)))
        raise FactorizationError(
            f"matrix is numerically singular (relative min eigenvalue {ev[0] / ev[-1]:.3e})",
            pivot=i, min_eig=float(np.linalg.eigvalsh(M)[0]))
    L = r[:, None] * Lc
    logdet = 2.0 * (np.log(r).sum() + np.log(np.diag(Lc)).sum())
    return SPDFactor(L, float(logdet))


def batch_cholesky(M):
    """Equilibrated Cholesky of a stack of SPD matrices.

    Returns ``(L, logdet, ok, rel_min_eig)``.  Entries with ``ok == False``
    failed the relative eigenvalue test and carry a NaN factor.
    """
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    d = np.diagonal(M, axis1=-2, axis2=-1)
    pos = np.all(d > 0, axis=-1)
    r = np.sqrt(np.where(d > 0, d, 1.0))
    C = M / (r[..., :, None] * r[..., None, :])
    ev = np.linalg.eigvalsh(C)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = ev[..., 0] / ev[..., -1]
    ok = pos & (rel > SPD_RTOL)
    C = np.where(ok[..., None, None], C, np.eye(M.shape[-1]))
    Lc = np.linalg.cholesky(C)
    L = r[..., :, None] * Lc
    logdet = 2.0 * (np.log(r).sum(-1) + np.log(np.diagonal(Lc, axis1=-2, axis2=-1)).sum(-1))
    L = np.where(ok[..., None, None], L, np.nan)
    logdet = np.where(ok, logdet, np.nan)
    return L, logdet, ok, np.where(pos, rel, -np.inf)


# ---------------------------------------------------------------------------
# Operator data.

@dataclass(frozen=True)
class HormanderPair:
    """The matrices ``(Q, B)`` of ``tr(Q D^2) + <BX, grad> - d_t``."""

    Q: np.ndarray
    B: np.ndarray
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        Q = _check_square(self.Q, "Q")
        B = _check_square(self.B, "B")
        if Q.shape != B.shape:
            raise InvalidInputError(f"Q {Q.shape} and B {B.shape} differ in size")
        if not _is_symmetric(Q):
            raise InvalidInputError("Q is not symmetric")
        ev = np.linalg.eigvalsh(Q)
        if ev[0] < -TOL_SYM * max(abs(ev[-1]), 1.0):
            raise InvalidInputError(f"Q is not positive semidefinite (min eigenvalue {ev[0]:.3e})")
        Q = 0.5 * (Q + Q.T)
        Q.setflags(write=False)
        B = B.copy()
        B.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "B", B)

    @property
    def N(self):
        return self.Q.shape[0]

    @property
    def trace_B(self):
        return float(np.trace(self.B))

    def exp_B(self, t):
        return mat_exp(self.B, t)


def heat_pair(N=1):
    """``Q = I_N``, ``B = 0``: the heat operator ``Delta - d_t``."""
    return HormanderPair(np.eye(N), np.zeros((N, N)), name="heat")


def kolmogorov_pair():
    """The degenerate Kolmogorov operator ``d_xx + x d_y - d_t`` on R^2."""
    return HormanderPair(np.array([[1.0, 0.0], [0.0, 0.0]]),
                         np.array([[0.0, 0.0], [1.0, 0.0]]), name="kolmogorov")


@dataclass(frozen=True)
class CovarianceMatrix:
    t: float
    K_t: np.ndarray
    chol: np.ndarray
    logdet: float


def _breakpoints(pair, ts):
    """Subdivision of [0, max(ts)] containing every requested time.

    Geometric breakpoints ``h * 2**k`` keep each Gauss-Legendre panel short
    relative to its distance from the origin, where ``h`` resolves the
    fastest rate of ``e^{sB}``.
    """
    tmax = float(np.max(ts))
    rate = np.abs(pair.B).sum(axis=0).max(initial=0.0)
    h = min(1.0, 1.0 / rate) if rate > 0 else 1.0
    geo = []
    x = h
    while x < tmax:
        geo.append(x)
        x *= 2.0
    return np.unique(np.concatenate([[0.0], ts, geo]))


def covariance_batch(pair, ts, order=DEFAULT_K_ORDER):
    """``t K(t)`` for many times at once.

    The integral ``int_0^t e^{sB} Q e^{sB^T} ds`` is accumulated over the
    sorted union of requested times and geometric breakpoints, each
    sub-interval integrated by Gauss-Legendre of the given order.

    Returns
    -------
    ndarray, shape (len(ts), N, N)
        ``t K(t)`` (not divided by ``t``), symmetrized.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if ts.size == 0 or np.any(~(ts > 0)) or not np.all(np.isfinite(ts)):
        raise InvalidInputError("times must be finite and positive")
    brk = _breakpoints(pair, ts)
    a, b = brk[:-1], brk[1:]
    x, w = leggauss(order)
    nodes = 0.5 * (a[:, None] + b[:, None]) + 0.5 * (b - a)[:, None] * x
    E = mat_exp(pair.B, nodes)
    integrand = E @ pair.Q @ np.swapaxes(E, -1, -2)
    pieces = np.einsum("ij,ijkl->ikl", 0.5 * (b - a)[:, None] * w, integrand)
    cum = np.concatenate([np.zeros((1,) + pieces.shape[1:]), np.cumsum(pieces, axis=0)])
    G = cum[np.searchsorted(brk, ts)]
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def covariance_K(pair, t, order=DEFAULT_K_ORDER):
    """Covariance matrix ``K(t)`` with its factorization.

    Raises
    ------
    HypoellipticityError
        If ``t K(t)`` is not numerically positive definite.
    """
    t = float(t)
    if not t > 0:
        raise InvalidInputError(f"t must be positive, got {t}")
    G = covariance_batch(pair, [t], order)[0]
    try:
        fac = spd_factorize(G)
    except FactorizationError as exc:
        ev = float(np.linalg.eigvalsh(G / t)[0])
        raise HypoellipticityError(
            f"K(t) is not positive definite at t={t:g} (min eigenvalue {ev:.3e})",
            t=t, min_eig=ev, pivot=exc.pivot) from exc
    K = G / t
    return CovarianceMatrix(t, 0.5 * (K + K.T), fac.factor, fac.logdet)


def covariance_crosscheck(pair, t, order=DEFAULT_K_ORDER):
    """Relative difference between ``K(t)`` at `order` and at twice `order`."""
    lo = covariance_batch(pair, [t], order)[0]
    hi = covariance_batch(pair, [t], 2 * order)[0]
    return float(np.abs(lo - hi).max() / np.abs(hi).max())


@dataclass(frozen=True)
class HormanderReport:
    times: tuple
    min_eigs: tuple
    max_eigs: tuple

    @property
    def passed(self):
        return all(lo > SPD_RTOL * hi for lo, hi in zip(self.min_eigs, self.max_eigs))


def check_hormander(pair, t_grid):
    """Smallest and largest eigenvalue of ``K(t)`` on a grid of times."""
    t_grid = [float(t) for t in t_grid]
    if not t_grid or any(not t > 0 for t in t_grid):
        raise InvalidInputError("t_grid must be nonempty with positive entries")
    G = covariance_batch(pair, t_grid)
    ev = np.linalg.eigvalsh(G / np.asarray(t_grid)[:, None, None])
    return HormanderReport(tuple(t_grid), tuple(ev[:, 0].tolist()), tuple(ev[:, -1].tolist()))
