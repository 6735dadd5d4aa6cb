"""Scalar nonlinearities for the chain-rule identities."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hormander import InvalidInputError

__all__ = ["PhiFunction", "quadratic", "power", "exponential", "softabs", "identity",
           "shifted_square"]

KINDS = ("quadratic", "power", "exponential", "softabs")


@dataclass(frozen=True)
class PhiFunction:
    """A nonlinearity with analytic first and second derivatives.

    Parameters
    ----------
    kind : one of ``quadratic``, ``power``, ``exponential``, ``softabs``.
    params : kind parameters: ``(a, b, c)``, ``(k,)``, ``()`` or ``(eps,)``.
    interval : the interval U on which the function is used.
    """

    kind: str
    params: tuple = ()
    interval: tuple = (-np.inf, np.inf)
    holder: float = 1.0
    convex: bool = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown phi kind {self.kind!r}")
        p = tuple(float(x) for x in self.params)
        if self.kind == "quadratic" and len(p) != 3:
            raise InvalidInputError("quadratic needs (a, b, c)")
        if self.kind == "power":
            if len(p) != 1 or p[0] != int(p[0]) or p[0] < 2:
                raise InvalidInputError("power needs an integer k >= 2")
            p = (int(p[0]),)
        if self.kind == "softabs" and (len(p) != 1 or not p[0] > 0):
            raise InvalidInputError("softabs needs eps > 0")
        if self.kind == "exponential" and p:
            raise InvalidInputError("exponential takes no parameters")
        lo, hi = (float(x) for x in self.interval)
        if not lo < hi:
            raise InvalidInputError("interval must satisfy lo < hi")
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "interval", (lo, hi))
        if self.convex is None:
            object.__setattr__(self, "convex", self._default_convex())

    def _default_convex(self):
        if self.kind == "quadratic":
            return self.params[0] >= 0
        if self.kind == "power":
            k = self.params[0]
            return k % 2 == 0 or self.interval[0] >= 0
        return True

    @property
    def name(self):
        if self.kind == "quadratic":
            a, b, c = self.params
            return f"quadratic({a:g},{b:g},{c:g})"
        if self.kind == "power":
            return f"power({self.params[0]})"
        if self.kind == "softabs":
            return f"softabs({self.params[0]:g})"
        return "exponential"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "quadratic":
            a, b, c = self.params
            return (a * r + b) * r + c
        if self.kind == "power":
            return r ** self.params[0]
        if self.kind == "exponential":
            return np.exp(r)
        eps = self.params[0]
        return np.hypot(r, eps)

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "quadratic":
            a, b, _ = self.params
            return 2.0 * a * r + b
        if self.kind == "power":
            k = self.params[0]
            return k * r ** (k - 1)
        if self.kind == "exponential":
            return np.exp(r)
        return r / np.hypot(r, self.params[0])

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "quadratic":
            return np.full_like(r, 2.0 * self.params[0])
        if self.kind == "power":
            k = self.params[0]
            return k * (k - 1) * r ** (k - 2)
        if self.kind == "exponential":
            return np.exp(r)
        eps = self.params[0]
        return eps ** 2 / np.hypot(r, eps) ** 3

    def poly_coeffs(self):
        """Ascending coefficients if the function is a polynomial, else None."""
        if self.kind == "quadratic":
            a, b, c = self.params
            return [c, b, a]
        if self.kind == "power":
            k = self.params[0]
            return [0.0] * k + [1.0]
        return None

    def decay_order(self):
        """Smallest power of ``r`` in ``phi(r) - phi(0)`` near ``r = 0``."""
        coeffs = self.poly_coeffs()
        if coeffs is not None:
            return next((j for j, c in enumerate(coeffs) if j and c), 1)
        return 2 if self.kind == "softabs" else 1

    def contains(self, values):
        lo, hi = self.interval
        v = np.asarray(values)
        return bool(np.all((v >= lo) & (v <= hi)))


def quadratic(a, b=0.0, c=0.0, **kw):
    return PhiFunction("quadratic", (a, b, c), **kw)


def identity():
    return quadratic(0.0, 1.0, 0.0)


def shifted_square(c0):
    """``r -> (r - c0)**2``, the integrand of the carre du champ."""
    return quadratic(1.0, -2.0 * c0, c0 * c0)


def power(k, **kw):
    return PhiFunction("power", (k,), **kw)


def exponential(**kw):
    return PhiFunction("exponential", (), **kw)


def softabs(eps, **kw):
    return PhiFunction("softabs", (eps,), **kw)

