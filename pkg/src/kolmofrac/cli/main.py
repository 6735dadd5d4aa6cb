"""Command-line entry point: ``kolmofrac run|sweep|presets``."""
from __future__ import annotations

import argparse
import sys

from ..hormander import heat_pair, kolmogorov_pair
from .config import PRESETS, ConfigError, load_config
from .report import render_report, render_sweep, render_timing, timing_path
from .runner import SWEEP_AXES, convergence_sweep, run_scenario

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="kolmofrac",
                                description="Verify nonlocal chain rules for Kolmogorov operators.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="scenario file (YAML)")
        sp.add_argument("--output", help="report path (default: config's output, else stdout)")
        sp.add_argument("--format", choices=("csv", "json"), help="report format")
        sp.add_argument("--threads", type=_positive, default=1, help="worker threads")
        sp.add_argument("--seed", type=_u64, help="Monte Carlo base seed")

    common(sub.add_parser("run", help="run every check of a scenario"))
    sw = sub.add_parser("sweep", help="convergence table along one axis")
    common(sw)
    sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sw.add_argument("--values", required=True,
                    help="comma-separated, strictly increasing axis values (at least 3)")
    sub.add_parser("presets", help="list the operator presets")
    return p


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _presets():
    lines = []
    for name, desc in PRESETS.items():
        pair = kolmogorov_pair() if name == "kolmogorov" else heat_pair(1)
        lines.append(f"{name}: {desc}")
        lines.append(f"  example N={pair.N} Q={pair.Q.tolist()} B={pair.B.tolist()}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_PASS


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        return _presets()
    try:
        cfg = load_config(args.config, seed=args.seed)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    path = args.output or cfg.output_path
    fmt = args.format or (cfg.output_format if not args.output else
                          ("json" if str(args.output).endswith(".json") else "csv"))
    if args.command == "sweep":
        try:
            values = [float(v) for v in args.values.split(",") if v.strip()]
            rows = convergence_sweep(cfg, args.axis, values, args.threads)
        except ValueError:
            print("config error: values: expected comma-separated numbers", file=sys.stderr)
            return EXIT_CONFIG
        except ConfigError as exc:
            for e in exc.errors:
                print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        _write(render_sweep(rows, fmt, args.axis), path)
        return EXIT_PASS
    result = run_scenario(cfg, args.threads)
    meta = {"operator": cfg.operator_name, "N": cfg.pair.N, "checks": list(cfg.checks)}
    _write(render_report(result, fmt, meta), path)
    if path is not None:
        _write(render_timing(result, fmt), timing_path(path))
    return EXIT_PASS if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
