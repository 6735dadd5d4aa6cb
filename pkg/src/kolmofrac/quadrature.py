"""Deterministic integration rules shared by every engine."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from .hormander import InvalidInputError

__all__ = ["QuadratureSpec", "PanelRule", "graded_rule", "tau_mesh", "radial_mesh",
           "hermite_rule", "angular_rule", "box_rule"]


@dataclass(frozen=True)
class QuadratureSpec:
    """Every tunable of every integration engine.

    Attributes
    ----------
    hermite_order : points per axis of the Gauss-Hermite tensor grid.
    mc_samples, mc_seed : Monte Carlo sample count and base seed.
    tau_panels, tau_panel_order : geometric panels on ``[tau_min, 1]`` and
        the Gauss-Legendre order per panel.
    tail_panels, tail_order : geometric panels on ``[1, tau_max]`` and
        their Gauss-Legendre order.
    tau_min, tau_max : cut-offs of the tau integrals; the pieces outside
        are added analytically.
    radial_min, radial_max : the same cut-offs for real-space radial
        integrals (same panel counts).
    angular_order : points per angle for radial-angular rules.
    k_order : Gauss-Legendre order for the covariance matrix K(t).
    time_refine : subdivide tau panels around the time bumps of the
        integrand.
    """

    hermite_order: int = 40
    mc_samples: int = 100_000
    mc_seed: int = 0
    tau_panels: int = 40
    tau_panel_order: int = 16
    tail_panels: int = 40
    tail_order: int = 16
    tau_min: float = 1e-10
    tau_max: float = 1e12
    radial_min: float = 1e-4
    radial_max: float = 1e6
    angular_order: int = 64
    k_order: int = 32
    time_refine: bool = True

    def __post_init__(self):
        for name in ("hermite_order", "tau_panel_order", "tail_order", "k_order", "angular_order"):
            if int(getattr(self, name)) < 2:
                raise InvalidInputError(f"{name} must be >= 2")
        for name in ("tau_panels", "tail_panels"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if int(self.mc_samples) < 1:
            raise InvalidInputError("mc_samples must be positive")
        if not (0 <= int(self.mc_seed) < 2 ** 64):
            raise InvalidInputError("mc_seed must be an unsigned 64-bit integer")
        if not (0 < self.tau_min < 1 < self.tau_max):
            raise InvalidInputError("need 0 < tau_min < 1 < tau_max")
        if not (0 < self.radial_min < 1 < self.radial_max):
            raise InvalidInputError("need 0 < radial_min < 1 < radial_max")

    def replace(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class PanelRule:
    """Composite rule on ``[lo, hi]`` with the split point 1 as a breakpoint."""

    nodes: np.ndarray
    weights: np.ndarray
    lo: float
    hi: float


def _gl_on(breaks, order):
    x, w = leggauss(order)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * x
    weights = half[:, None] * w
    return nodes.ravel(), weights.ravel()


def graded_rule(lo, hi, near_panels, near_order, far_panels, far_order, refine=()):
    """Geometrically graded rule on ``[lo, 1] U [1, hi]``.

    `refine` is an iterable of ``(center, width)``; panels overlapping
    ``center +- 6 width`` are subdivided to length at most `width`.
    """
    near = np.geomspace(lo, 1.0, near_panels + 1)
    far = np.geomspace(1.0, hi, far_panels + 1)
    extra_near, extra_far = [], []
    for center, width in refine:
        if not width > 0:
            continue
        pts = center + width * np.arange(-6.0, 6.5)
        for p in pts:
            if lo < p < 1.0:
                extra_near.append(p)
            elif 1.0 < p < hi:
                extra_far.append(p)
    near = np.unique(np.concatenate([near, extra_near]))
    far = np.unique(np.concatenate([far, extra_far]))
    n1, w1 = _gl_on(near, near_order)
    n2, w2 = _gl_on(far, far_order)
    return PanelRule(np.concatenate([n1, n2]), np.concatenate([w1, w2]), lo, hi)


def tau_mesh(quad, refine=()):
    """The tau rule used by every subordination integral."""
    if not quad.time_refine:
        refine = ()
    return graded_rule(quad.tau_min, quad.tau_max, quad.tau_panels, quad.tau_panel_order,
                       quad.tail_panels, quad.tail_order, refine)


def radial_mesh(quad):
    return graded_rule(quad.radial_min, quad.radial_max, quad.tau_panels, quad.tau_panel_order,
                       quad.tail_panels, quad.tail_order)


def hermite_rule(order, dim):
    """Tensor Gauss-Hermite rule for the standard normal on R^dim.

    Returns nodes of shape (order**dim, dim) and weights summing to 1.
    """
    x, w = hermegauss(order)
    w = w / np.sqrt(2.0 * np.pi)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def angular_rule(n, order):
    """Symmetric rule on the unit sphere S^{n-1}; weights sum to its area."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        phi = 2.0 * np.pi * np.arange(order) / order
        return np.stack([np.cos(phi), np.sin(phi)], -1), np.full(order, 2.0 * np.pi / order)
    if n == 3:
        mu, wmu = leggauss(max(order // 2, 2))
        phi = 2.0 * np.pi * np.arange(order) / order
        M, P = np.meshgrid(mu, phi, indexing="ij")
        W = np.outer(wmu, np.full(order, 2.0 * np.pi / order))
        st = np.sqrt(1.0 - M ** 2)
        dirs = np.stack([st * np.cos(P), st * np.sin(P), M], -1).reshape(-1, 3)
        return dirs, W.ravel()
    raise InvalidInputError(f"radial-angular quadrature supports n in (1, 2, 3), got {n}")


def box_rule(lo, hi, order, panels=1):
    """Tensor composite Gauss-Legendre rule on a box."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    axes, wts = [], []
    for a, b in zip(lo, hi):
        n, w = _gl_on(np.linspace(a, b, panels + 1), order)
        axes.append(n)
        wts.append(w)
    grids = np.meshgrid(*axes, indexing="ij")
    wgrids = np.meshgrid(*wts, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], -1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], -1), -1)
    return nodes, weights
