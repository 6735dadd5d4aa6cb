"""Execute a scenario: every (check, function, phi) unit over all orders and points."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..balakrishnan import carre_evolutive, frac_K, frac_K_mc, remainder, remainder_mc
from ..hormander import InvalidInputError
from ..phi import power
from ..testfn import time_slice
from ..verify import (ReportRow, check_convexity_inequality, check_engine_agreement,
                      check_general_chain_rule, check_kernel_mass, check_s_limits,
                      check_square_rule, check_tind_reduction)
from .config import ConfigError

__all__ = ["RunResult", "run_scenario", "convergence_sweep", "SweepRow", "SWEEP_AXES"]

SWEEP_AXES = ("hermite_order", "tau_panels", "s")
NAN = float("nan")


@dataclass(frozen=True)
class RunResult:
    rows: tuple
    wall_time_ms: tuple

    @property
    def passed(self):
        return all(r.verdict == "pass" for r in self.rows)


@dataclass(frozen=True)
class _Unit:
    order: tuple
    check: str
    function: object
    phi: object
    engine: str


def _phi_label(phi):
    return phi.name if phi is not None else ""


def _units(cfg):
    units = []
    for ci, check in enumerate(cfg.checks):
        if check == "kernel_mass":
            units.append(_Unit((ci, 0, 0, 0), check, None, None, "exact"))
            continue
        phis = [None]
        if check == "convexity":
            # a non-convex phi is only meaningful for the other checks
            phis = [p for p in cfg.phis if p.convex] or list(cfg.phis)
        elif check in ("general_chain_rule", "eval:remainder"):
            phis = list(cfg.phis)
        elif check == "s_limits":
            phis = [p for p in cfg.phis if p.kind != "quadratic"] or [power(3)]
        engines = cfg.engines if check.startswith("eval:") else ("auto",)
        for fi, fn in enumerate(cfg.functions):
            for pi, phi in enumerate(phis):
                for ei, eng in enumerate(engines):
                    units.append(_Unit((ci, fi, pi, ei), check, fn, phi, eng))
    return units


def _eval_rows(cfg, unit):
    pair, fn, phi, quad = cfg.pair, unit.function.fn, unit.phi, cfg.quad
    s = np.array(cfg.s_values)
    rows = []
    for i, (X, t) in enumerate(cfg.points):
        se = None
        if unit.check == "eval:frac_K":
            if unit.engine == "mc":
                val, se = frac_K_mc(pair, fn, X, t, s, quad, point_index=i)
            else:
                val = frac_K(pair, fn, X, t, s, quad, unit.engine)
        elif unit.check == "eval:carre":
            if unit.engine == "mc":
                raise InvalidInputError("the carre du champ has no Monte Carlo path")
            val = carre_evolutive(pair, fn, X, t, s, quad, unit.engine)
        else:
            if unit.engine == "mc":
                val, se = remainder_mc(pair, fn, phi, X, t, s, quad, point_index=i)
            else:
                val = remainder(pair, fn, phi, X, t, s, quad, unit.engine)
        val = np.atleast_1d(val)
        for k, sv in enumerate(s):
            tol = NAN if se is None else float(se[k])
            rows.append(ReportRow(unit.check, float(sv), i, float(val[k]), NAN, NAN, tol, "pass",
                                  unit.engine, phi=_phi_label(phi)))
    return rows


def _run_unit(cfg, unit):
    pair, quad, pts, s = cfg.pair, cfg.quad, list(cfg.points), list(cfg.s_values)
    fn = unit.function.fn if unit.function is not None else None
    if unit.check.startswith("eval:"):
        return _eval_rows(cfg, unit)
    if unit.check == "square_rule":
        rep = check_square_rule(pair, fn, pts, s, quad)
    elif unit.check == "convexity":
        rep = check_convexity_inequality(pair, fn, unit.phi, pts, s, quad)
    elif unit.check == "tind_reduction":
        if not fn.is_time_independent():
            raise InvalidInputError("tind_reduction needs a time-independent function")
        rep = check_tind_reduction(time_slice(fn, 0.0), pts, s, quad)
    elif unit.check == "s_limits":
        rep = check_s_limits(pair, fn, pts, cfg.s_grid, unit.phi, quad)
    elif unit.check == "general_chain_rule":
        rep = check_general_chain_rule(pair, fn, unit.phi, pts, s, quad)
    elif unit.check == "engine_agreement":
        rep = check_engine_agreement(pair, fn, pts, s, quad)
    elif unit.check == "kernel_mass":
        rep = check_kernel_mass(pair, pts, quad=quad)
    else:
        raise InvalidInputError(f"unknown check {unit.check!r}")
    return list(rep.rows)


def _error_rows(cfg, unit, exc):
    reason = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    s_list = cfg.s_grid if unit.check == "s_limits" else cfg.s_values
    return [ReportRow(unit.check, float(sv), i, NAN, NAN, NAN, NAN, "error", unit.engine,
                      phi=_phi_label(unit.phi), reason=reason)
            for sv in s_list for i in range(len(cfg.points))]


def _execute(cfg, unit):
    start = time.perf_counter()
    try:
        rows = _run_unit(cfg, unit)
    except Exception as exc:  # per-row error capture: the batch never aborts
        rows = _error_rows(cfg, unit, exc)
    elapsed = (time.perf_counter() - start) * 1e3
    name = unit.function.name if unit.function is not None else ""
    rows = [replace(r, function=name) for r in rows]
    return rows, elapsed / max(len(rows), 1)


def run_scenario(cfg, threads=1):
    """Run every cell of `cfg`; rows come back in a fixed order regardless of threads.

    Order: check (as listed), function, phi, engine, then ``s`` ascending,
    then point index.
    """
    units = _units(cfg)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda u: _execute(cfg, u), units))
    else:
        results = [_execute(cfg, u) for u in units]
    keyed = []
    for unit, (rows, ms) in zip(units, results):
        for r in rows:
            keyed.append(((unit.order, r.s, r.point, r.check), r, ms))
    keyed.sort(key=lambda x: x[0])
    return RunResult(tuple(r for _, r, _ in keyed), tuple(ms for _, _, ms in keyed))


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    check: str
    function: str
    phi: str
    s: float
    point: int
    value: float
    residual: float
    order: float


def convergence_sweep(cfg, axis, values, threads=1):
    """Re-run `cfg` along one axis and tabulate residuals and observed orders.

    For ``hermite_order`` and ``tau_panels`` the residual of a cell is the
    change ``|F_i - F_{i-1}|`` of its left-hand value between successive
    axis values; for ``s`` it is the check's own residual (the magnitude of
    the value for ``eval:*`` rows).  The observed
    order is ``log(r_{i-1}/r_i) / log(x_i/x_{i-1})`` with ``x`` the axis
    value (``1/(1-s)`` on the ``s`` axis).
    """
    if axis not in SWEEP_AXES:
        raise ConfigError([f"axis: expected one of {SWEEP_AXES}, got {axis!r}"])
    values = [float(v) for v in values]
    if len(values) < 3:
        raise ConfigError(["values: a sweep needs at least 3 axis values"])
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(["values: axis values must be strictly increasing"])
    runs = []
    for v in values:
        if axis == "s":
            if not (0.0 < v <= 1.0 - 1e-3):
                raise ConfigError([f"values: order {v!r} outside (0, 0.999]"])
            c = replace(cfg, s_values=(v,))
        else:
            if v != int(v) or v < 2:
                raise ConfigError([f"values: {axis} must be integers >= 2"])
            c = replace(cfg, quad=cfg.quad.replace(**{axis: int(v)}))
        runs.append(run_scenario(c, threads).rows)
    x = [1.0 / (1.0 - v) for v in values] if axis == "s" else values
    out = []
    prev_val, prev_res = {}, {}
    for i, rows in enumerate(runs):
        for r in rows:
            key = (r.check, r.function, r.phi, r.engine, r.point) + (() if axis == "s" else (r.s,))
            if axis == "s":
                # evaluation rows have no residual; their magnitude is tracked instead
                res = r.residual if math.isfinite(r.residual) else abs(r.lhs)
            else:
                res = abs(r.lhs - prev_val[key]) if key in prev_val else NAN
            order = NAN
            if key in prev_res and i > 0:
                a, b = prev_res[key], res
                if a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b):
                    order = math.log(a / b) / math.log(x[i] / x[i - 1])
            out.append(SweepRow(values[i], r.check, r.function, r.phi, r.s, r.point, r.lhs,
                                res, order))
            prev_val[key] = r.lhs
            prev_res[key] = res
    return tuple(out)
