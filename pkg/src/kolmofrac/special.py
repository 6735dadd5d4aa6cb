"""Gamma function and the normalization constant of the fractional Laplacian."""
from __future__ import annotations

import numpy as np
from scipy import special as _sp

from .hormander import InvalidInputError

__all__ = ["gamma_fn", "gamma_ns", "check_order", "S_MAX"]

S_MAX = 1.0 - 1e-3


def gamma_fn(x):
    """Gamma function for ``x > 0`` (scipy's double-precision implementation)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise InvalidInputError("gamma_fn needs finite x > 0")
    out = _sp.gamma(x)
    return float(out) if out.ndim == 0 else out


def check_order(s):
    """Validate a fractional order ``0 < s <= 1 - 1e-3`` and return it as float."""
    s = float(s)
    if not (0.0 < s <= S_MAX):
        raise InvalidInputError(f"fractional order must lie in (0, {S_MAX}], got {s!r}")
    return s


def gamma_ns(n, s):
    """``s 4^s Gamma((n + 2s)/2) / (pi^{n/2} Gamma(1 - s))``.

    Evaluated through log-gamma so that large `n` does not overflow.
    """
    if int(n) != n or n < 1:
        raise InvalidInputError("n must be a positive integer")
    s = check_order(s)
    log = (np.log(s) + 2.0 * s * np.log(2.0) + _sp.gammaln(0.5 * n + s)
           - 0.5 * n * np.log(np.pi) - _sp.gammaln(1.0 - s))
    return float(np.exp(log))
