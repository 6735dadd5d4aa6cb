"""Batch front end: scenario configs, runs, sweeps and reports."""
from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .main import main
from .report import load_schema, render_report, render_sweep
from .runner import RunResult, SweepRow, convergence_sweep, run_scenario

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config", "main",
           "load_schema", "render_report", "render_sweep", "RunResult", "SweepRow",
           "convergence_sweep", "run_scenario"]
