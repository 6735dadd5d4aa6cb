"""Closed class of test functions: finite sums of polynomial times Gaussian.

Each term is ``P(x) * exp(-x^T A x + b^T x + c)`` with ``A`` symmetric
positive semidefinite.  The class is closed under sums, products,
differentiation, time slicing and Gaussian expectation, which is what lets
every semigroup in this package be evaluated exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from itertools import product as iproduct

import numpy as np

from .hormander import InvalidInputError, spd_factorize

__all__ = [
    "Term",
    "TestFunction",
    "gaussian",
    "poly_gaussian",
    "integral",
    "constant",
    "polynomial",
    "gaussian_expectation",
    "time_slice",
    "whitened_expectation",
]

MAX_USER_DEGREE = 6


# ---------------------------------------------------------------------------
# Polynomials as {exponent tuple: coefficient}.

def _padd(p, q, scale=1.0):
    out = dict(p)
    for e, c in q.items():
        out[e] = out.get(e, 0.0) + scale * c
    return {e: c for e, c in out.items() if c != 0.0}


def _pmul(p, q):
    out = {}
    for (e1, c1), (e2, c2) in iproduct(p.items(), q.items()):
        e = tuple(a + b for a, b in zip(e1, e2))
        out[e] = out.get(e, 0.0) + c1 * c2
    return {e: c for e, c in out.items() if c != 0.0}


def _pdiff(p, i):
    out = {}
    for e, c in p.items():
        if e[i]:
            f = list(e)
            f[i] -= 1
            f = tuple(f)
            out[f] = out.get(f, 0.0) + c * e[i]
    return out


def _pdeg(p):
    return max((sum(e) for e in p), default=0)


def _peval(p, x):
    """Evaluate at points ``x`` of shape (..., d)."""
    out = np.zeros(x.shape[:-1])
    for e, c in p.items():
        term = np.full(x.shape[:-1], c)
        for i, k in enumerate(e):
            if k:
                term = term * x[..., i] ** k
        out = out + term
    return out


def _unit(d):
    return {(0,) * d: 1.0}


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    """``poly(x) * exp(-x^T A x + b^T x + c)``."""

    poly: tuple
    A: np.ndarray
    b: np.ndarray
    c: float

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def pdict(self):
        return dict(self.poly)

    def exponent(self, x):
        return -((x @ self.A) * x).sum(-1) + x @ self.b + self.c

    def __call__(self, x):
        return _peval(self.pdict, x) * np.exp(self.exponent(x))


def _make_term(pdict, A, b, c):
    A = np.asarray(A, dtype=float)
    A = 0.5 * (A + A.T)
    b = np.asarray(b, dtype=float)
    A.setflags(write=False)
    b.setflags(write=False)
    return Term(tuple(sorted(pdict.items())), A, b, float(c))


class TestFunction:
    """A finite sum of polynomial-times-Gaussian terms on R^d.

    Instances are immutable.  Arithmetic (``+``, ``-``, ``*`` by scalars or
    other test functions, integer powers) stays inside the class.
    """

    __test__ = False  # not a pytest class

    def __init__(self, terms, d):
        self._terms = tuple(terms)
        self._d = int(d)
        for t in self._terms:
            if t.d != self._d:
                raise InvalidInputError("term dimension mismatch")
            ev = np.linalg.eigvalsh(t.A)
            if ev[0] < -1e-12 * max(1.0, ev[-1]):
                raise InvalidInputError("inverse-scale matrix must be positive semidefinite")

    @property
    def terms(self):
        return self._terms

    @property
    def d(self):
        return self._d

    def __repr__(self):
        return f"TestFunction(d={self.d}, terms={len(self.terms)})"

    # -- structure ---------------------------------------------------------
    def is_schwartz(self):
        """True if every term decays (all inverse-scale matrices definite)."""
        return all(np.linalg.eigvalsh(t.A)[0] > 0 for t in self.terms)

    def is_constant(self):
        return all(not np.any(t.A) and not np.any(t.b) and _pdeg(t.pdict) == 0
                   for t in self.terms)

    def degree(self):
        return max((_pdeg(t.pdict) for t in self.terms), default=0)

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        if np.isscalar(other):
            other = constant(other, self.d)
        if other.d != self.d:
            raise InvalidInputError("dimension mismatch")
        return TestFunction(self.terms + other.terms, self.d)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, TestFunction) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            k = float(other)
            return TestFunction([_make_term({e: k * c for e, c in t.pdict.items()}, t.A, t.b, t.c)
                                 for t in self.terms], self.d)
        if other.d != self.d:
            raise InvalidInputError("dimension mismatch")
        out = []
        for s, t in iproduct(self.terms, other.terms):
            out.append(_make_term(_pmul(s.pdict, t.pdict), s.A + t.A, s.b + t.b, s.c + t.c))
        return TestFunction(out, self.d)

    __rmul__ = __mul__

    def __pow__(self, k):
        k = int(k)
        if k < 0:
            raise InvalidInputError("negative powers leave the closed class")
        if k == 0:
            return constant(1.0, self.d)
        return reduce(lambda a, b: a * b, [self] * k)

    def compose_poly(self, coeffs):
        """``sum_k coeffs[k] * self**k`` for a polynomial in ascending order."""
        out = constant(0.0, self.d)
        power = constant(1.0, self.d)
        for k, a in enumerate(coeffs):
            if k:
                power = power * self
            if a:
                out = out + a * power
        return out

    # -- evaluation --------------------------------------------------------
    def _points(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.d,):
            raise InvalidInputError(f"point dimension {x.shape[-1:]} does not match d={self.d}")
        return x

    def __call__(self, x):
        x = self._points(x)
        out = np.zeros(x.shape[:-1])
        for t in self.terms:
            out = out + t(x)
        return out if out.ndim else float(out)

    eval = __call__

    def partial(self, i):
        """Exact partial derivative in coordinate ``i`` (again a TestFunction)."""
        out = []
        for t in self.terms:
            # d/dx_i exponent = -2 (A x)_i + b_i
            lin = {tuple(int(j == k) for j in range(self.d)): -2.0 * t.A[i, k]
                   for k in range(self.d) if t.A[i, k] != 0.0}
            if t.b[i] != 0.0:
                lin[(0,) * self.d] = t.b[i]
            p = _padd(_pdiff(t.pdict, i), _pmul(t.pdict, lin))
            if p:
                out.append(_make_term(p, t.A, t.b, t.c))
        return TestFunction(out, self.d)

    def grad(self, x):
        x = self._points(x)
        return np.stack([np.asarray(self.partial(i)(x)) for i in range(self.d)], axis=-1)

    def hessian(self, x):
        x = self._points(x)
        rows = []
        for i in range(self.d):
            di = self.partial(i)
            rows.append(np.stack([np.asarray(di.partial(j)(x)) for j in range(self.d)], axis=-1))
        return np.stack(rows, axis=-2)

    def laplacian(self, x, dims=None):
        x = self._points(x)
        dims = range(self.d) if dims is None else dims
        return sum(np.asarray(self.partial(i).partial(i)(x)) for i in dims)

    def value_at_infinity(self):
        """Limit at infinity: 0 for Schwartz functions, the constant part otherwise."""
        if self.is_schwartz():
            return 0.0
        rest = [t for t in self.terms if np.linalg.eigvalsh(t.A)[0] > 0]
        const = [t for t in self.terms if t not in rest]
        if all(not np.any(t.A) and not np.any(t.b) and _pdeg(t.pdict) == 0 for t in const):
            return float(sum(t.pdict.get((0,) * self.d, 0.0) * np.exp(t.c) for t in const))
        raise InvalidInputError("function has no limit at infinity")

    def value_bounds(self):
        """Interval containing the range (exact for pure Gaussian sums)."""
        lo = hi = 0.0
        for t in self.terms:
            p = t.pdict
            if _pdeg(p) == 0:
                a = p.get((0,) * self.d, 0.0)
                if not np.any(t.A):
                    if np.any(t.b):
                        return (-np.inf, np.inf)
                    peak = np.exp(t.c)
                else:
                    fac = spd_factorize(2.0 * t.A) if np.linalg.eigvalsh(t.A)[0] > 0 else None
                    if fac is None:
                        return (-np.inf, np.inf)
                    xs = fac.solve(t.b)
                    peak = np.exp(t.c + 0.5 * t.b @ xs - xs @ t.A @ xs)
                if a * peak >= 0:
                    hi += a * peak
                else:
                    lo += a * peak
            else:
                return (-np.inf, np.inf)
        return (lo, hi)

    def support_box(self, n_widths=9.0):
        """Box outside of which every Gaussian term is below ``exp(-n_widths**2)``."""
        lo = np.full(self.d, np.inf)
        hi = np.full(self.d, -np.inf)
        for t in self.terms:
            ev = np.linalg.eigvalsh(t.A)
            if ev[0] <= 0:
                raise InvalidInputError("support box needs decaying terms")
            center = np.linalg.solve(2.0 * t.A, t.b)
            half = n_widths / np.sqrt(ev[0]) + np.sqrt(max(_pdeg(t.pdict), 1)) / np.sqrt(ev[0])
            lo = np.minimum(lo, center - half)
            hi = np.maximum(hi, center + half)
        return lo, hi

    def envelope(self):
        """Per-term (A_min_eig, center, log-peak) for Schwartz functions."""
        out = []
        for t in self.terms:
            ev = np.linalg.eigvalsh(t.A)[0]
            center = np.linalg.solve(2.0 * t.A, t.b)
            amp = sum(abs(c) for c in t.pdict.values())
            logpeak = t.c + 0.5 * t.b @ center + np.log(max(amp, 1e-300))
            out.append((ev, center, logpeak))
        return out

    # -- space-time helpers ------------------------------------------------
    def extend_time(self):
        """``u(X, t) = v(X)`` as a function on R^{d+1}."""
        d = self.d
        out = []
        for t in self.terms:
            A = np.zeros((d + 1, d + 1))
            A[:d, :d] = t.A
            b = np.append(t.b, 0.0)
            p = {e + (0,): c for e, c in t.pdict.items()}
            out.append(_make_term(p, A, b, t.c))
        return TestFunction(out, d + 1)

    def is_time_independent(self):
        return all(not np.any(t.A[-1]) and t.b[-1] == 0.0
                   and all(e[-1] == 0 for e in t.pdict) for t in self.terms)


# ---------------------------------------------------------------------------
# Constructors.

def _as_matrix(scale, d):
    A = np.asarray(scale, dtype=float)
    if A.ndim == 0:
        return float(A) * np.eye(d)
    if A.ndim == 1:
        return np.diag(A)
    return A


def gaussian(center, scale=1.0, amplitude=1.0):
    """``amplitude * exp(-(x - center)^T A (x - center))``.

    `scale` is the inverse-scale matrix ``A`` (scalar, diagonal, or full).
    """
    mu = np.atleast_1d(np.asarray(center, dtype=float))
    d = mu.size
    A = _as_matrix(scale, d)
    if A.shape != (d, d):
        raise InvalidInputError("scale matrix shape does not match center")
    if not np.linalg.eigvalsh(0.5 * (A + A.T))[0] > 0:
        raise InvalidInputError("Gaussian inverse-scale matrix must be positive definite")
    return TestFunction([_make_term({(0,) * d: float(amplitude)}, A, 2.0 * A @ mu, -mu @ A @ mu)], d)


def poly_gaussian(coeffs, center, scale=1.0, amplitude=1.0):
    """Polynomial times Gaussian; `coeffs` maps exponent tuples to coefficients."""
    g = gaussian(center, scale, amplitude)
    t = g.terms[0]
    p = {tuple(int(k) for k in e): float(c) for e, c in dict(coeffs).items()}
    if any(len(e) != g.d for e in p):
        raise InvalidInputError("exponent tuple length does not match dimension")
    if _pdeg(p) > MAX_USER_DEGREE:
        raise InvalidInputError(f"polynomial degree capped at {MAX_USER_DEGREE}")
    return TestFunction([_make_term(_pmul(t.pdict, p), t.A, t.b, t.c)], g.d)


def constant(value, d):
    return TestFunction([_make_term({(0,) * d: float(value)}, np.zeros((d, d)), np.zeros(d), 0.0)], d)


def polynomial(coeffs, d):
    """Pure polynomial (not Schwartz); used for moments such as ``u(X, t) = t``."""
    p = {tuple(int(k) for k in e): float(c) for e, c in dict(coeffs).items()}
    return TestFunction([_make_term(p, np.zeros((d, d)), np.zeros(d), 0.0)], d)


# ---------------------------------------------------------------------------
# Slicing.

def _slice_term(t, sigma):
    """Fix the last coordinate of a term at the values `sigma` (array)."""
    N = t.d - 1
    sigma = np.asarray(sigma, dtype=float)
    A = t.A[:N, :N]
    b = t.b[:N][None, :] - 2.0 * sigma[:, None] * t.A[:N, N][None, :]
    c = t.c + t.b[N] * sigma - t.A[N, N] * sigma ** 2
    poly = {}
    for e, coef in t.pdict.items():
        key = e[:N]
        poly[key] = poly.get(key, 0.0) + coef * sigma ** e[N]
    return A, b, c, poly


def time_slice(u, t):
    """The function ``Y -> u(Y, t)`` on R^{d-1}."""
    if u.d < 2:
        raise InvalidInputError("time slicing needs a space-time function")
    out = []
    for term in u.terms:
        A, b, c, poly = _slice_term(term, [t])
        p = {e: float(v[0]) for e, v in poly.items() if v[0] != 0.0}
        if p:
            out.append(_make_term(p, A, b[0], c[0]))
    return TestFunction(out, u.d - 1)


# ---------------------------------------------------------------------------
# Gaussian expectations in the whitened variable.

def _moments(mu, S, needed):
    """``E[y^alpha]`` for y ~ N(mu, S) (batched) for all alpha in `needed`.

    Uses ``E[y^(a+e_i)] = mu_i E[y^a] + sum_k S_ik a_k E[y^(a-e_k)]``.
    """
    d = mu.shape[-1]
    memo = {(0,) * d: np.ones(mu.shape[:-1])}

    def get(a):
        if a in memo:
            return memo[a]
        i = next(j for j, k in enumerate(a) if k)
        base = list(a)
        base[i] -= 1
        base = tuple(base)
        val = mu[..., i] * get(base)
        for k in range(d):
            if base[k]:
                lower = list(base)
                lower[k] -= 1
                val = val + S[..., i, k] * base[k] * get(tuple(lower))
        memo[a] = val
        return val

    return {a: get(a) for a in needed}


class Tilt:
    """Spectral data of ``H = I + G^T G`` with ``G = sqrt(2) R L`` and ``R^T R = A``.

    ``H`` is never formed: the SVD of ``G`` keeps the identity's
    contribution exact even when ``L`` spans many orders of magnitude.
    """

    def __init__(self, A, L):
        ev, W = np.linalg.eigh(A)
        self.R = np.sqrt(np.clip(ev, 0.0, None))[:, None] * W.T
        G = np.sqrt(2.0) * (self.R @ L)
        self.U, sv, Vh = np.linalg.svd(G)
        self.V = np.swapaxes(Vh, -1, -2)
        self.G = G
        self.inv_diag = 1.0 / (1.0 + sv * sv)
        self.sv = sv
        self.logdet = np.log1p(sv * sv).sum(-1)

    def hinv(self):
        return (self.V * self.inv_diag[..., None, :]) @ np.swapaxes(self.V, -1, -2)

    def root(self):
        """``C`` with ``C C^T = H^{-1}``."""
        return self.V * np.sqrt(self.inv_diag)[..., None, :]

    def hinv_apply(self, x):
        w = np.einsum("...ji,...j->...i", self.V, x) * self.inv_diag
        return np.einsum("...ij,...j->...i", self.V, w)

    def dual_quad(self, e):
        """``e^T (I + G G^T)^{-1} e``, a nonnegative form."""
        w = np.einsum("...ji,...j->...i", self.U, e)
        return (w * w * self.inv_diag).sum(-1)


def _center(A, b):
    """Split ``b = 2 A y* + b_n`` with ``b_n`` in the null space of `A`."""
    ev, W = np.linalg.eigh(A)
    keep = ev > 1e-14 * max(ev.max(initial=0.0), 1e-300)
    inv = np.where(keep, 1.0 / np.where(keep, ev, 1.0), 0.0)
    coef = np.einsum("ij,...i->...j", W, b)
    ystar = np.einsum("ij,...j->...i", W, 0.5 * inv * coef)
    bn = np.einsum("ij,...j->...i", W, np.where(keep, 0.0, coef))
    return ystar, bn


def whitened_expectation(A, b, c, poly, m, L):
    """``E[poly(y) exp(-y^T A y + b^T y + c)]`` for ``y = m + L z``, ``z ~ N(0, I)``.

    Batched over the leading axis of `b`, `c`, `m`, `L` (poly values may be
    arrays over the same axis).  Only ``L`` is used, never the inverse of the
    covariance ``L L^T``, so arbitrarily anisotropic kernels are safe.  The
    exponent is written around the peak ``y*`` of the integrand so that no
    large terms cancel when the kernel mean drifts far away.
    """
    ystar, bn = _center(A, b)
    cstar = c + 0.5 * np.einsum("...i,...i->...", b, ystar)
    d = m - ystar
    T = Tilt(A, L)
    e = np.einsum("ij,...j->...i", T.R, d)
    Lt = np.swapaxes(L, -1, -2)
    gam = np.einsum("...ij,...j->...i", Lt, bn)
    beta = gam - np.sqrt(2.0) * np.einsum("...ji,...j->...i", T.G, e)
    hb = T.hinv_apply(beta)
    logZ = (cstar + np.einsum("...i,...i->...", bn, m) - T.dual_quad(e) - 0.5 * T.logdet)
    if np.any(bn):
        hg = T.hinv_apply(gam)
        logZ = logZ + 0.5 * np.einsum("...i,...i->...", gam, hg) - np.sqrt(2.0) * np.einsum(
            "...i,...i->...", hg, np.einsum("...ji,...j->...i", T.G, e))
    keys = [k for k in poly]
    if all(sum(k) == 0 for k in keys):
        pv = sum(poly[k] for k in keys)
    else:
        mu_y = m + np.einsum("...ij,...j->...i", L, hb)
        LV = L @ T.V
        S_y = (LV * T.inv_diag[..., None, :]) @ np.swapaxes(LV, -1, -2)
        mom = _moments(mu_y, S_y, keys)
        pv = sum(poly[k] * mom[k] for k in keys)
    return pv * np.exp(logZ)


def gaussian_expectation(f, m, S):
    """Exact ``E[f(y)]`` for ``y ~ N(m, S)``.

    Parameters
    ----------
    f : TestFunction
    m : array_like, shape (d,)
    S : array_like, shape (d, d), symmetric positive definite
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (f.d,):
        raise InvalidInputError("mean dimension does not match function")
    L = spd_factorize(np.asarray(S, dtype=float)).factor
    total = 0.0
    for t in f.terms:
        total += float(whitened_expectation(t.A, t.b, t.c, t.pdict, m, L))
    return total


def integral(f):
    """Exact ``int_{R^d} f(x) dx`` for a Schwartz function of the closed class."""
    if not f.is_schwartz():
        raise InvalidInputError("integral needs decaying terms")
    d = f.d
    total = 0.0
    for t in f.terms:
        mu = np.linalg.solve(2.0 * t.A, t.b)
        S = np.linalg.inv(2.0 * t.A)
        keys = list(t.pdict)
        mom = _moments(mu[None, :], S[None], keys)
        pv = sum(t.pdict[e] * mom[e][0] for e in keys)
        _, logdet = np.linalg.slogdet(t.A)
        total += pv * np.exp(0.5 * d * np.log(np.pi) - 0.5 * logdet + t.c + 0.5 * t.b @ mu)
    return float(total)
