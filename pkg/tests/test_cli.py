import json
import math
import subprocess
import sys
import textwrap

import jsonschema
import numpy as np
import pytest

from kolmofrac.cli import (ConfigError, convergence_sweep, load_schema, parse_config,
                           render_report, render_sweep, run_scenario)
from kolmofrac.cli.main import main
from kolmofrac.cli.report import REPORT_COLUMNS, timing_path
from kolmofrac.hormander import covariance_K

HEAT_SQUARE = """
operator: {preset: heat, N: 1}
functions:
  - {name: g, kind: gaussian, center: [0.2], scale: 1.0}
s_values: [0.5]
checks: [square_rule]
"""


def cfg(text, **kw):
    return parse_config(textwrap.dedent(text), **kw)


class TestParse:
    def test_kolmogorov_preset(self):
        c = cfg("operator: kolmogorov\nfunctions: [{kind: gaussian, center: [0, 0, 0]}]\n"
                "s_values: [0.5]\nchecks: [square_rule]\n")
        assert c.pair.N == 2
        assert np.array_equal(c.pair.Q, [[1, 0], [0, 0]]) and np.array_equal(c.pair.B, [[0, 0], [1, 0]])
        t = 2.0
        assert np.allclose(covariance_K(c.pair, t).K_t, [[1, t / 2], [t / 2, t * t / 3]], rtol=1e-12)

    def test_empty_checks(self):
        with pytest.raises(ConfigError) as info:
            cfg("operator: heat\nfunctions: [{kind: gaussian, center: [0]}]\ns_values: [0.5]\n"
                "checks: []\n")
        assert any(e.startswith("checks") for e in info.value.errors)

    def test_order_out_of_range(self):
        with pytest.raises(ConfigError) as info:
            cfg("operator: heat\nfunctions: [{kind: gaussian, center: [0]}]\ns_values: [1.0]\n"
                "checks: [square_rule]\n")
        assert any(e.startswith("s_values[0]") for e in info.value.errors)

    def test_all_errors_reported(self):
        with pytest.raises(ConfigError) as info:
            cfg("""
            operator: {N: 2, Q: [1, 0, 0], B: [0, 0, 1, 0]}
            functions: [{kind: blob, center: [0, 0]}]
            s_values: [0.5, -0.1]
            checks: [square_rule, nonsense]
            engines: [warp]
            extra: 1
            """)
        paths = {e.split(":")[0] for e in info.value.errors}
        assert {"operator.Q", "s_values[1]", "checks[1]", "engines[0]", "extra"} <= paths

    def test_syntax_error_position(self):
        with pytest.raises(ConfigError) as info:
            cfg("operator: heat\nchecks: [square_rule\ns_values: [0.5]\n")
        assert "line" in info.value.errors[0] and "column" in info.value.errors[0]

    def test_custom_operator_and_functions(self):
        c = cfg("""
        operator: {N: 2, Q: [[1, 0], [0, 0]], B: [0, 0, 1, 0], name: mine}
        functions:
          - {kind: polynomial-times-gaussian, center: [0, 0], scale: [1, 2],
             coefficients: {"1,0": 2.0, "0,0": 1.0}}
          - {kind: sum, terms: [{kind: gaussian, center: [0, 0, 1]}, {kind: constant, value: 2}]}
        phis: [{kind: exponential, interval: [-1, 4]}, {kind: softabs, eps: 0.1}]
        s_values: [0.75, 0.25, 0.25]
        checks: [convexity]
        points: [[0, 0, 0], [1, 2, 3]]
        quadrature: {hermite_order: 20}
        seed: 9
        """)
        assert c.operator_name == "mine" and c.s_values == (0.25, 0.75)
        assert c.functions[0].fn.d == 3 and c.functions[1].fn([0, 0, 1]) == pytest.approx(3.0)
        assert c.phis[0].interval == (-1.0, 4.0) and c.quad.hermite_order == 20
        assert c.quad.mc_seed == 9 and len(c.points) == 2

    def test_seed_override(self):
        assert cfg(HEAT_SQUARE, seed=77).quad.mc_seed == 77

    def test_phi_required(self):
        with pytest.raises(ConfigError) as info:
            cfg("operator: heat\nfunctions: [{kind: gaussian, center: [0]}]\ns_values: [0.5]\n"
                "checks: [convexity]\n")
        assert any(e.startswith("phis") for e in info.value.errors)


class TestRun:
    def test_heat_square_rule(self):
        res = run_scenario(cfg(HEAT_SQUARE))
        assert res.passed and len(res.rows) == 5
        text = render_report(res, "csv")
        assert text.splitlines()[0] == ",".join(REPORT_COLUMNS)

    def test_non_hypoelliptic_rows_are_errors(self):
        res = run_scenario(cfg("""
        operator: {N: 2, Q: [[1, 0], [0, 0]], B: [[0, 0], [0, 0]]}
        functions: [{kind: gaussian, center: [0, 0, 0]}]
        s_values: [0.5]
        checks: [square_rule, kernel_mass]
        """))
        assert not res.passed and res.rows
        assert all(r.verdict == "error" and "HypoellipticityError" in r.reason for r in res.rows)

    def test_two_engines_pair_rows(self):
        c = cfg("""
        operator: heat
        functions: [{kind: gaussian, center: [0, 0]}]
        s_values: [0.3, 0.6]
        checks: [eval:frac_K]
        engines: [exact, hermite]
        points: [[0, 0], [0.5, 0.1]]
        """)
        rows = run_scenario(c).rows
        assert len(rows) == 2 * 2 * 2
        ex = {(r.s, r.point): r.lhs for r in rows if r.engine == "exact"}
        he = {(r.s, r.point): r.lhs for r in rows if r.engine == "hermite"}
        assert ex.keys() == he.keys()
        assert all(abs(ex[k] - he[k]) <= 1e-8 * abs(ex[k]) for k in ex)

    def test_ordering(self):
        c = cfg("""
        operator: heat
        functions: [{kind: gaussian, center: [0]}]
        s_values: [0.75, 0.25]
        checks: [tind_reduction, square_rule]
        """)
        rows = run_scenario(c).rows
        checks = [r.check for r in rows]
        assert checks == ["tind_reduction"] * 10 + ["square_rule"] * 10
        assert [(r.s, r.point) for r in rows[:10]] == sorted((r.s, r.point) for r in rows[:10])

    def test_threads_do_not_change_output(self):
        c = cfg("""
        operator: kolmogorov
        functions: [{kind: gaussian, center: [0, 0.1, 0]}, {kind: gaussian, center: [0.2, 0, 0]}]
        phis: [{kind: softabs, eps: 0.2}]
        s_values: [0.5]
        checks: [square_rule, convexity, eval:frac_K]
        engines: [mc]
        quadrature: {mc_samples: 2000}
        points: [[0, 0, 0], [0.3, 0.2, 0.1]]
        """)
        a = render_report(run_scenario(c, threads=1), "csv")
        b = render_report(run_scenario(c, threads=4), "csv")
        assert a == b

    def test_json_schema(self):
        c = cfg(HEAT_SQUARE.replace("checks: [square_rule]", "checks: [square_rule, eval:carre]"))
        doc = json.loads(render_report(run_scenario(c), "json", {"operator": "heat"}))
        jsonschema.validate(doc, load_schema())
        assert doc["verdict"] == "pass" and doc["rows"][-1]["rhs"] is None


class TestSweep:
    def test_tau_panels_converges(self):
        c = cfg("""
        operator: kolmogorov
        functions: [{kind: gaussian, center: [0.1, 0, 0.2]}]
        s_values: [0.5]
        checks: [eval:frac_K]
        points: [[0.2, 0.1, 0.3]]
        """)
        rows = convergence_sweep(c, "tau_panels", [10, 20, 40])
        res = [r.residual for r in rows]
        assert math.isnan(res[0]) and res[1] > res[2]

    def test_s_axis_remainder(self):
        c = cfg("""
        operator: {preset: heat, N: 1}
        functions: [{kind: gaussian, center: [0, 0.1]}]
        phis: [{kind: power, k: 3}]
        s_values: [0.5]
        checks: [eval:remainder]
        points: [[0.3, 0.0]]
        """)
        rows = convergence_sweep(c, "s", [0.9, 0.95, 0.99])
        mags = [r.residual for r in rows]
        assert mags[0] > mags[1] > mags[2] > 0
        assert all(o > 0 for o in [r.order for r in rows][1:])

    def test_constant_function(self):
        c = cfg("""
        operator: heat
        functions: [{kind: constant, value: 2}]
        s_values: [0.5]
        checks: [eval:frac_K]
        points: [[0, 0]]
        """)
        rows = convergence_sweep(c, "hermite_order", [10, 20, 30])
        assert all(r.residual == 0 for r in rows[1:]) and math.isnan(rows[0].residual)
        assert render_sweep(rows, "csv", "hermite_order").startswith("axis_value,")

    @pytest.mark.parametrize("values", [[10, 20], [20, 10, 30], [1.5, 2, 3]])
    def test_invalid_axis_values(self, values):
        with pytest.raises(ConfigError):
            convergence_sweep(cfg(HEAT_SQUARE), "tau_panels", values)


class TestMain:
    def write(self, tmp_path, text, name="c.yaml"):
        p = tmp_path / name
        p.write_text(textwrap.dedent(text))
        return str(p)

    def test_exit_pass_and_files(self, tmp_path):
        path = self.write(tmp_path, HEAT_SQUARE)
        out = tmp_path / "r.csv"
        assert main(["run", path, "--output", str(out)]) == 0
        assert out.read_text().startswith("check,") and (tmp_path / "r.timing.csv").exists()

    def test_exit_error_rows(self, tmp_path):
        path = self.write(tmp_path, HEAT_SQUARE.replace("{preset: heat, N: 1}",
                                                        "{N: 1, Q: [[0]], B: [[0]]}"))
        assert main(["run", path, "--output", str(tmp_path / "r.json")]) == 1
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["verdict"] == "fail"

    def test_exit_config_error(self, tmp_path, capsys):
        path = self.write(tmp_path, "operator: heat\nchecks: []\ns_values: [2]\n")
        assert main(["run", path]) == 2
        err = capsys.readouterr().err
        assert "checks" in err and "s_values[0]" in err

    def test_missing_file(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.yaml")]) == 2

    def test_stdout_json(self, tmp_path, capsys):
        path = self.write(tmp_path, HEAT_SQUARE)
        assert main(["run", path, "--format", "json"]) == 0
        jsonschema.validate(json.loads(capsys.readouterr().out), load_schema())

    def test_sweep_command(self, tmp_path, capsys):
        path = self.write(tmp_path, HEAT_SQUARE)
        assert main(["sweep", path, "--axis", "hermite_order", "--values", "10,20,30"]) == 0
        assert len(capsys.readouterr().out.splitlines()) == 1 + 3 * 5

    def test_sweep_too_few_values(self, tmp_path):
        path = self.write(tmp_path, HEAT_SQUARE)
        assert main(["sweep", path, "--axis", "s", "--values", "0.5,0.6"]) == 2

    def test_presets(self, capsys):
        assert main(["presets"]) == 0
        assert "kolmogorov" in capsys.readouterr().out

    def test_console_module(self):
        proc = subprocess.run([sys.executable, "-m", "kolmofrac.cli", "presets"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and "heat" in proc.stdout


def test_timing_path():
    assert timing_path("out/report.csv") == "out/report.timing.csv"
    assert timing_path("report") == "report.timing"
