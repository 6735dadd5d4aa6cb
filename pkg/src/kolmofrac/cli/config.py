"""Scenario configuration: YAML text to a validated :class:`ScenarioConfig`."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from ..hormander import HormanderPair, InvalidInputError, heat_pair, kolmogorov_pair
from ..phi import PhiFunction
from ..quadrature import QuadratureSpec
from ..special import S_MAX
from ..testfn import (MAX_USER_DEGREE, TestFunction, constant, gaussian, poly_gaussian)
from ..verify import S_GRID, default_points

__all__ = ["ConfigError", "ScenarioConfig", "NamedFunction", "parse_config", "load_config",
           "PRESETS", "CHECKS", "EVALUATIONS"]

PRESETS = {
    "heat": "Q = I_N, B = 0 (N from the 'N' key, default 1)",
    "kolmogorov": "N = 2, Q = [[1, 0], [0, 0]], B = [[0, 0], [1, 0]]",
}
CHECKS = ("square_rule", "convexity", "tind_reduction", "s_limits", "general_chain_rule",
          "engine_agreement", "kernel_mass")
EVALUATIONS = ("eval:frac_K", "eval:carre", "eval:remainder")
ENGINE_NAMES = ("auto", "exact", "hermite", "mc")
FORMATS = ("csv", "json")


class ConfigError(Exception):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class NamedFunction:
    name: str
    fn: TestFunction


@dataclass(frozen=True)
class ScenarioConfig:
    pair: HormanderPair
    operator_name: str
    functions: tuple
    phis: tuple
    s_values: tuple
    s_grid: tuple
    points: tuple
    quad: QuadratureSpec
    checks: tuple
    engines: tuple = ("auto",)
    output_path: str = None
    output_format: str = "csv"
    raw: dict = field(default=None, compare=False, repr=False)


class _Collector:
    def __init__(self):
        self.errors = []

    def add(self, path, msg):
        self.errors.append(f"{path}: {msg}")

    def number(self, value, path):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.add(path, f"expected a number, got {value!r}")
            return None
        if not np.isfinite(value):
            self.add(path, "must be finite")
            return None
        return float(value)

    def vector(self, value, path, length=None):
        if not isinstance(value, list):
            self.add(path, f"expected a list of numbers, got {value!r}")
            return None
        out = [self.number(v, f"{path}[{i}]") for i, v in enumerate(value)]
        if any(v is None for v in out):
            return None
        if length is not None and len(out) != length:
            self.add(path, f"expected {length} entries, got {len(out)}")
            return None
        return np.array(out)

    def matrix(self, value, path, n):
        """Square n x n matrix from nested rows or a flat row-major list."""
        if isinstance(value, list) and value and all(isinstance(r, list) for r in value):
            rows = [self.vector(r, f"{path}[{i}]", n) for i, r in enumerate(value)]
            if any(r is None for r in rows):
                return None
            if len(rows) != n:
                self.add(path, f"expected {n} rows, got {len(rows)}")
                return None
            return np.array(rows)
        flat = self.vector(value, path, n * n)
        return None if flat is None else flat.reshape(n, n)


def _operator(c, node):
    path = "operator"
    if node is None:
        c.add(path, "missing")
        return None, None
    if isinstance(node, str):
        node = {"preset": node}
    if not isinstance(node, dict):
        c.add(path, "expected a preset name or a mapping")
        return None, None
    preset = node.get("preset")
    if preset is not None:
        if preset == "kolmogorov":
            if "N" in node and node["N"] != 2:
                c.add(f"{path}.N", "the kolmogorov preset has N = 2")
            return kolmogorov_pair(), "kolmogorov"
        if preset == "heat":
            N = node.get("N", 1)
            if isinstance(N, bool) or not isinstance(N, int) or N < 1:
                c.add(f"{path}.N", f"expected a positive integer, got {N!r}")
                return None, None
            return heat_pair(N), "heat"
        c.add(f"{path}.preset", f"unknown preset {preset!r} (known: {', '.join(PRESETS)})")
        return None, None
    N = node.get("N")
    if isinstance(N, bool) or not isinstance(N, int) or N < 1:
        c.add(f"{path}.N", f"expected a positive integer, got {N!r}")
        return None, None
    Q = c.matrix(node.get("Q"), f"{path}.Q", N)
    B = c.matrix(node.get("B"), f"{path}.B", N)
    if Q is None or B is None:
        return None, None
    try:
        return HormanderPair(Q, B, name=node.get("name", "custom")), node.get("name", "custom")
    except InvalidInputError as exc:
        c.add(path, str(exc))
        return None, None


def _exponents(c, key, path, d):
    if isinstance(key, str):
        parts = key.replace(" ", "").split(",")
    elif isinstance(key, (list, tuple)):
        parts = list(key)
    else:
        parts = [key]
    try:
        e = tuple(int(p) for p in parts)
    except (TypeError, ValueError):
        c.add(path, f"exponent {key!r} is not a list of integers")
        return None
    if len(e) != d or any(k < 0 for k in e):
        c.add(path, f"exponent {key!r} must have {d} nonnegative entries")
        return None
    return e


def _function(c, node, path, N):
    if not isinstance(node, dict):
        c.add(path, "expected a mapping")
        return None
    kind = node.get("kind")
    if kind == "sum":
        terms = node.get("terms")
        if not isinstance(terms, list) or not terms:
            c.add(f"{path}.terms", "a sum needs a nonempty list of terms")
            return None
        parts = [_function(c, t, f"{path}.terms[{i}]", N) for i, t in enumerate(terms)]
        if any(p is None for p in parts):
            return None
        dims = {p.d for p in parts}
        if len(dims) > 1:
            if dims == {N, N + 1}:
                parts = [p if p.d == N + 1 else p.extend_time() for p in parts]
            else:
                c.add(path, "terms of a sum must share a dimension")
                return None
        out = parts[0]
        for p in parts[1:]:
            out = out + p
        return out
    if kind == "constant":
        v = c.number(node.get("value"), f"{path}.value")
        return None if v is None else constant(v, N + 1)
    if kind not in ("gaussian", "polynomial-times-gaussian"):
        c.add(f"{path}.kind", f"unknown function kind {kind!r}")
        return None
    center = c.vector(node.get("center"), f"{path}.center")
    if center is None:
        return None
    d = center.size
    if d not in (N, N + 1):
        c.add(f"{path}.center", f"length must be N = {N} (time-independent) or N + 1 = {N + 1}")
        return None
    scale = node.get("scale", 1.0)
    if isinstance(scale, list) and scale and isinstance(scale[0], list):
        A = c.matrix(scale, f"{path}.scale", d)
    elif isinstance(scale, list):
        A = c.vector(scale, f"{path}.scale", d)
    else:
        A = c.number(scale, f"{path}.scale")
    amp = c.number(node.get("amplitude", 1.0), f"{path}.amplitude")
    if A is None or amp is None:
        return None
    try:
        if kind == "gaussian":
            fn = gaussian(center, A, amp)
        else:
            raw = node.get("coefficients")
            if isinstance(raw, dict):
                items = list(raw.items())
            elif isinstance(raw, list):
                items = [tuple(x) if isinstance(x, list) and len(x) == 2 else (x, None)
                         for x in raw]
            else:
                c.add(f"{path}.coefficients", "expected a mapping or a list of [exponents, value]")
                return None
            coeffs = {}
            for j, (k, v) in enumerate(items):
                e = _exponents(c, k, f"{path}.coefficients[{j}]", d)
                val = c.number(v, f"{path}.coefficients[{j}]")
                if e is None or val is None:
                    return None
                if sum(e) > MAX_USER_DEGREE:
                    c.add(f"{path}.coefficients[{j}]", f"degree capped at {MAX_USER_DEGREE}")
                    return None
                coeffs[e] = coeffs.get(e, 0.0) + val
            fn = poly_gaussian(coeffs, center, A, amp)
    except (InvalidInputError, np.linalg.LinAlgError) as exc:
        c.add(path, str(exc))
        return None
    if not fn.is_schwartz():
        c.add(f"{path}.scale", "inverse-scale matrix must be positive definite")
        return None
    return fn if d == N + 1 else fn.extend_time()


def _phi(c, node, path):
    if isinstance(node, str):
        node = {"kind": node}
    if not isinstance(node, dict):
        c.add(path, "expected a mapping")
        return None
    kind = node.get("kind")
    kw = {}
    if "interval" in node:
        iv = node["interval"]
        if not isinstance(iv, list) or len(iv) != 2:
            c.add(f"{path}.interval", "expected [lo, hi]")
            return None
        lo = -np.inf if iv[0] is None else c.number(iv[0], f"{path}.interval[0]")
        hi = np.inf if iv[1] is None else c.number(iv[1], f"{path}.interval[1]")
        if lo is None or hi is None:
            return None
        kw["interval"] = (lo, hi)
    if "convex" in node:
        if not isinstance(node["convex"], bool):
            c.add(f"{path}.convex", "expected true or false")
            return None
        kw["convex"] = node["convex"]
    if kind == "quadratic":
        vals = [c.number(node.get(k, 0.0 if k != "a" else None), f"{path}.{k}") for k in "abc"]
        params = tuple(vals)
    elif kind == "power":
        params = (node.get("k"),)
        if isinstance(params[0], bool) or not isinstance(params[0], int):
            c.add(f"{path}.k", f"expected an integer >= 2, got {params[0]!r}")
            return None
    elif kind == "softabs":
        params = (c.number(node.get("eps"), f"{path}.eps"),)
    elif kind == "exponential":
        params = ()
    else:
        c.add(f"{path}.kind", f"unknown phi kind {kind!r}")
        return None
    if any(p is None for p in params):
        return None
    try:
        return PhiFunction(kind, params, **kw)
    except InvalidInputError as exc:
        c.add(path, str(exc))
        return None


def _orders(c, node, path, default):
    if node is None:
        if default is None:
            c.add(path, "missing")
        return default
    if not isinstance(node, list) or not node:
        c.add(path, "expected a nonempty list")
        return None
    out = []
    for i, v in enumerate(node):
        x = c.number(v, f"{path}[{i}]")
        if x is None:
            continue
        if not (0.0 < x <= S_MAX):
            c.add(f"{path}[{i}]", f"order {x!r} outside (0, {S_MAX}]")
            continue
        out.append(x)
    return tuple(sorted(set(out)))


def _quadrature(c, node):
    if node is None:
        return QuadratureSpec()
    if not isinstance(node, dict):
        c.add("quadrature", "expected a mapping")
        return QuadratureSpec()
    known = {f.name: f for f in fields(QuadratureSpec)}
    kw = {}
    for k, v in node.items():
        if k not in known:
            c.add(f"quadrature.{k}", "unknown field")
            continue
        default = getattr(QuadratureSpec(), k)
        if isinstance(default, bool):
            if not isinstance(v, bool):
                c.add(f"quadrature.{k}", "expected true or false")
                continue
        elif isinstance(default, int):
            if isinstance(v, bool) or not isinstance(v, int):
                c.add(f"quadrature.{k}", f"expected an integer, got {v!r}")
                continue
        else:
            v = c.number(v, f"quadrature.{k}")
            if v is None:
                continue
        kw[k] = v
    try:
        return QuadratureSpec(**kw)
    except InvalidInputError as exc:
        c.add("quadrature", str(exc))
        return QuadratureSpec()


def parse_config(text, seed=None):
    """Parse and validate YAML scenario text.

    Raises :class:`ConfigError` listing every problem: syntax errors carry
    line and column, semantic errors the path of the offending field.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError([f"syntax error at {where}: {problem}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a mapping"])
    c = _Collector()
    known = {"operator", "functions", "phis", "s_values", "s_grid", "points", "quadrature",
             "checks", "engines", "output", "seed"}
    for k in raw:
        if k not in known:
            c.add(str(k), "unknown key")
    pair, op_name = _operator(c, raw.get("operator"))
    N = pair.N if pair is not None else None

    functions = []
    fnodes = raw.get("functions")
    if fnodes is None:
        fnodes = []
    if not isinstance(fnodes, list):
        c.add("functions", "expected a list")
        fnodes = []
    if N is not None:
        for i, node in enumerate(fnodes):
            fn = _function(c, node, f"functions[{i}]", N)
            if fn is not None:
                name = node.get("name", f"f{i}") if isinstance(node, dict) else f"f{i}"
                functions.append(NamedFunction(str(name), fn))

    phis = []
    pnodes = raw.get("phis") or []
    if not isinstance(pnodes, list):
        c.add("phis", "expected a list")
        pnodes = []
    for i, node in enumerate(pnodes):
        phi = _phi(c, node, f"phis[{i}]")
        if phi is not None:
            phis.append(phi)

    s_values = _orders(c, raw.get("s_values"), "s_values", None)
    s_grid = _orders(c, raw.get("s_grid"), "s_grid", S_GRID)
    if s_grid is not None and len(s_grid) < 2:
        c.add("s_grid", "needs at least two orders")

    checks = raw.get("checks")
    if not isinstance(checks, list) or not checks:
        c.add("checks", "at least one check is required")
        checks = []
    for i, name in enumerate(checks):
        if name not in CHECKS + EVALUATIONS:
            c.add(f"checks[{i}]", f"unknown check {name!r}")
    if any(ch != "kernel_mass" for ch in checks) and not fnodes:
        c.add("functions", "at least one function is required by the requested checks")
    needs_phi = {"convexity", "general_chain_rule", "eval:remainder"}
    if needs_phi.intersection(checks) and not pnodes:
        c.add("phis", "the requested checks need at least one phi")

    engines = raw.get("engines", ["auto"])
    if not isinstance(engines, list) or not engines:
        c.add("engines", "expected a nonempty list")
        engines = ["auto"]
    for i, e in enumerate(engines):
        if e not in ENGINE_NAMES:
            c.add(f"engines[{i}]", f"unknown engine {e!r}")

    points = []
    pnode = raw.get("points")
    if pnode is None and N is not None:
        points = default_points(N)
    elif pnode is not None:
        if not isinstance(pnode, list) or not pnode:
            c.add("points", "expected a nonempty list of [X..., t]")
        elif N is not None:
            for i, p in enumerate(pnode):
                v = c.vector(p, f"points[{i}]", N + 1)
                if v is not None:
                    points.append((v[:N], float(v[N])))

    quad = _quadrature(c, raw.get("quadrature"))
    seed_val = raw.get("seed") if seed is None else seed
    if seed_val is not None:
        if isinstance(seed_val, bool) or not isinstance(seed_val, int) or not (
                0 <= seed_val < 2 ** 64):
            c.add("seed", "expected an unsigned 64-bit integer")
        else:
            quad = quad.replace(mc_seed=seed_val)

    out_path, out_fmt = None, "csv"
    onode = raw.get("output")
    if onode is not None:
        if isinstance(onode, str):
            onode = {"path": onode}
        if not isinstance(onode, dict):
            c.add("output", "expected a path or a mapping with path and format")
        else:
            out_path = onode.get("path")
            out_fmt = onode.get("format", "json" if str(out_path).endswith(".json") else "csv")
            if out_fmt not in FORMATS:
                c.add("output.format", f"expected one of {FORMATS}")

    if c.errors:
        raise ConfigError(c.errors)
    return ScenarioConfig(pair, op_name, tuple(functions), tuple(phis), s_values, s_grid,
                          tuple(points), quad, tuple(checks), tuple(engines), out_path, out_fmt,
                          raw)


def load_config(path, seed=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), seed=seed)
