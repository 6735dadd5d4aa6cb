"""CSV and JSON writers for run reports and sweep tables.

Floats are written with 17 significant digits so that identical runs give
identical bytes.  Wall times go to a separate ``<stem>.timing.<ext>`` file.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict
from importlib import resources

__all__ = ["REPORT_COLUMNS", "SWEEP_COLUMNS", "render_report", "render_sweep", "render_timing",
           "timing_path", "load_schema", "SCHEMA_ID"]

REPORT_COLUMNS = ("check", "function", "phi", "s", "point", "lhs", "rhs", "residual",
                  "tolerance", "verdict", "engine", "reason")
SWEEP_COLUMNS = ("axis_value", "check", "function", "phi", "s", "point", "value", "residual",
                 "order")
SCHEMA_ID = "kolmofrac-report/1"


def _fmt(x):
    if isinstance(x, float):
        return "%.17g" % x if math.isfinite(x) else ("nan" if math.isnan(x) else
                                                      ("inf" if x > 0 else "-inf"))
    return str(x)


def _json_value(x):
    if isinstance(x, float):
        return float("%.17g" % x) if math.isfinite(x) else None
    return x


def _csv(columns, records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([_fmt(rec[c]) for c in columns])
    return buf.getvalue()


def _records(rows, columns):
    return [{c: asdict(r)[c] for c in columns} for r in rows]


def render_report(result, fmt, meta=None):
    """Text of a run report in ``csv`` or ``json``."""
    recs = _records(result.rows, REPORT_COLUMNS)
    if fmt == "csv":
        return _csv(REPORT_COLUMNS, recs)
    doc = {
        "schema": SCHEMA_ID,
        "verdict": "pass" if result.passed else "fail",
        "meta": meta or {},
        "rows": [{k: _json_value(v) for k, v in r.items()} for r in recs],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_sweep(rows, fmt, axis):
    recs = _records(rows, SWEEP_COLUMNS)
    if fmt == "csv":
        return _csv(SWEEP_COLUMNS, recs)
    doc = {"axis": axis, "rows": [{k: _json_value(v) for k, v in r.items()} for r in recs]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_timing(result, fmt):
    cols = ("check", "function", "phi", "s", "point", "wall_time_ms")
    recs = []
    for r, ms in zip(result.rows, result.wall_time_ms):
        rec = {c: getattr(r, c) for c in cols[:-1]}
        rec["wall_time_ms"] = float(ms)
        recs.append(rec)
    if fmt == "csv":
        return _csv(cols, recs)
    return json.dumps({"rows": [{k: _json_value(v) for k, v in r.items()} for r in recs]},
                      indent=2, sort_keys=True) + "\n"


def timing_path(path):
    """``out/report.csv`` -> ``out/report.timing.csv``."""
    head, dot, ext = str(path).rpartition(".")
    if not dot or "/" in ext:
        return f"{path}.timing"
    return f"{head}.timing.{ext}"


def load_schema():
    """The JSON schema shipped with the package for run reports."""
    text = resources.files("kolmofrac.cli").joinpath("report_schema.json").read_text("utf-8")
    return json.loads(text)
