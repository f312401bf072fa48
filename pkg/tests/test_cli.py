import io
import json
from pathlib import Path

import numpy as np
import pytest

from metriconn.cli import run

SPECS = Path(__file__).resolve().parent.parent / "specs"


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def run_json(*argv):
    code, out, err = run_cli(*argv, "--json")
    return code, json.loads(out), err


def test_check_skew_is_metric():
    code, fields, _ = run_json("check", str(SPECS / "skew.conn"))
    assert code == 0
    assert fields["verdict"] == "Metric"
    assert fields["metric.g.1.1"] == "1.0"
    assert fields["metric.g.1.2"] == "0.0"
    assert fields["metric.g.2.2"] == "1.0"


def test_check_real_eigenvalues_exits_one():
    code, fields, _ = run_json("check", str(SPECS / "realeig.conn"))
    assert code == 1
    assert fields["verdict"] == "NotMetricEigen"
    assert fields["chart.x0"] <= fields["witness.x"] <= fields["chart.x1"]
    assert fields["chart.y0"] <= fields["witness.y"] <= fields["chart.y1"]


def test_check_skew_condition_exits_one():
    code, fields, _ = run_json("check", str(SPECS / "skewfail.conn"))
    assert code == 1
    assert fields["verdict"] == "NotMetricSkew"
    assert -0.9 <= fields["witness.x"] <= 0.9


def test_check_flat_with_defect_exits_two():
    code, fields, _ = run_json("check", str(SPECS / "torus.conn"))
    assert code == 2
    assert fields["verdict"] == "Flat"
    assert fields["diagnostics.loop_defect"] > 0.9


def test_volume_torus_defect():
    code, fields, _ = run_json("volume", str(SPECS / "torus.conn"))
    assert code == 2
    assert fields["closed"] is True
    assert abs(fields["defect.x"] - 2.0 * 3.141592653589793) <= 1e-9


def test_volume_skew_clean():
    code, fields, _ = run_json("volume", str(SPECS / "skew.conn"))
    assert code == 0
    assert fields["closed"] is True


def test_euler_on_compare_pair():
    code, fields, _ = run_json("euler", str(SPECS / "compare_pair.conn"))
    assert code == 0
    assert abs(fields["euler_number"]) <= 1e-9


def test_compare_with_second_section():
    code, fields, _ = run_json("compare", str(SPECS / "compare_pair.conn"))
    assert code == 0
    assert fields["euler_number.difference"] <= 1e-9


def test_compare_two_files(tmp_path):
    second = tmp_path / "second.conn"
    second.write_text(
        "[chart]\n"
        "x = 0 .. 6.283185307179586\n"
        "y = 0 .. 6.283185307179586\n"
        "periodic = true true\n"
        "[connection]\n"
        "theta.1.2.dy = sin(x)\n"
        "theta.2.1.dy = -sin(x)\n",
        encoding="utf-8")
    code, fields, _ = run_json(
        "compare", str(SPECS / "compare_pair.conn"), str(second))
    assert code == 0
    assert fields["euler_number.difference"] <= 1e-9


def test_compare_incompatible_exits_one(tmp_path):
    spec = tmp_path / "incompat.conn"
    spec.write_text(
        "[chart]\n"
        "x = 0 .. 6.283185307179586\n"
        "y = 0 .. 6.283185307179586\n"
        "[connection]\n"
        "theta.1.1.dx = 1\n"
        "[connection2]\n"
        "theta.1.2.dy = x\n"
        "theta.2.1.dy = -x\n"
        "[metric]\n"
        "g.1.1 = 1\n"
        "g.2.2 = 1\n",
        encoding="utf-8")
    code, fields, _ = run_json("compare", str(spec))
    assert code == 1
    assert fields["error"] == "NotCompatible"
    assert fields["error.which"] == "first connection"


def test_torsion_command():
    code, fields, _ = run_json("torsion", str(SPECS / "realeig.conn"))
    assert code == 0
    assert fields["torsion.sup"] >= 0.0


def test_levi_civita_command():
    code, fields, _ = run_json("levi-civita", str(SPECS / "hyperbolic_band.conn"))
    assert code == 0
    assert fields["diagnostics.compat_residual"] <= 1e-10
    from metriconn.expr import parse
    assert parse(fields["theta.2.1.dy"]).eval(0.3, 1.0) == pytest.approx(1.0)
    assert parse(fields["theta.1.2.dy"]).eval(0.3, 1.0) == pytest.approx(-np.exp(0.6))


def test_semi_symmetric_command():
    code, fields, _ = run_json("semi-symmetric", str(SPECS / "hyperbolic_band.conn"))
    assert code == 0
    assert fields["diagnostics.compat_residual"] <= 1e-10
    assert fields["torsion.2.12"] != "0.0"


@pytest.mark.parametrize("name,expected_code", [
    ("torus", 2),
    ("semi_symmetric", 0),
    ("hyperbolic_band", 0),
])
def test_examples_run(name, expected_code):
    code, fields, _ = run_json("example", name)
    assert code == expected_code
    assert fields["example"] == name


def test_example_unknown_name():
    code, out, err = run_cli("example", "moebius")
    assert code == 3
    assert "unknown example" in err


def test_grid_override():
    code, fields, _ = run_json("check", str(SPECS / "skew.conn"), "--grid", "32", "48")
    assert code == 0
    assert fields["grid.nx"] == 32
    assert fields["grid.ny"] == 48


def test_malformed_spec_reports_location(tmp_path):
    bad = tmp_path / "bad.conn"
    bad.write_text(
        "[chart]\n"
        "x = 0 .. 1\n"
        "y = 0 .. 1\n"
        "[connection]\n"
        "theta.1.2.dy = x + \n",
        encoding="utf-8")
    code, out, err = run_cli("check", str(bad))
    assert code == 3
    assert "bad.conn:5" in err


def test_missing_chart_section(tmp_path):
    bad = tmp_path / "nochart.conn"
    bad.write_text("[connection]\ntheta.1.1.dx = 1\n", encoding="utf-8")
    code, _, err = run_cli("check", str(bad))
    assert code == 3
    assert "[chart]" in err


def test_unknown_key_rejected(tmp_path):
    bad = tmp_path / "key.conn"
    bad.write_text(
        "[chart]\nx = 0 .. 1\ny = 0 .. 1\nspin = 7\n", encoding="utf-8")
    code, _, err = run_cli("check", str(bad))
    assert code == 3
    assert "spin" in err


def test_missing_file():
    code, _, err = run_cli("check", "no_such_file.conn")
    assert code == 3
    assert "cannot read" in err


def test_json_reports_are_deterministic():
    first = run_cli("check", str(SPECS / "skew.conn"), "--json")
    second = run_cli("check", str(SPECS / "skew.conn"), "--json")
    assert first == second
    assert first[1].endswith("\n")


def test_json_round_trip():
    _, out, _ = run_cli("check", str(SPECS / "torus.conn"), "--json")
    fields = json.loads(out)
    assert json.dumps(fields, sort_keys=True) + "\n" == out
    for value in fields.values():
        # flat document: every value is a scalar, never a nested structure
        assert isinstance(value, (str, int, float, bool))


def test_metric_command_dumps_sampled_metric():
    code, out, _ = run_cli("metric", str(SPECS / "torus.conn"))
    assert code == 2
    # 64 x 64 node samples follow the report
    data = [ln for ln in out.splitlines() if ln.count(" ") == 4 and ":" not in ln]
    assert len(data) == 64 * 64
    x, y, g11, g12, g22 = map(float, data[-1].split())
    assert g11 > 1.0 and abs(g12) < 1e-9


def test_human_report_includes_wall_clock():
    code, out, _ = run_cli("check", str(SPECS / "skew.conn"))
    assert code == 0
    assert "wall_clock:" in out
    assert "verdict: Metric" in out


def test_euler_requires_metric_section():
    code, _, err = run_cli("euler", str(SPECS / "skew.conn"))
    assert code == 3
    assert "[metric]" in err


def test_compare_rejects_chart_mismatch(tmp_path):
    second = tmp_path / "second.conn"
    second.write_text(
        "[chart]\nx = 0 .. 1\ny = 0 .. 1\n[connection]\ntheta.1.2.dy = x\n",
        encoding="utf-8")
    code, _, err = run_cli(
        "compare", str(SPECS / "compare_pair.conn"), str(second))
    assert code == 3
    assert "chart" in err


def test_out_of_domain_coefficient_is_input_error(tmp_path):
    bad = tmp_path / "domain.conn"
    bad.write_text(
        "[chart]\nx = -1 .. 1\ny = -1 .. 1\n"
        "[connection]\ntheta.1.2.dy = ln(x)\ntheta.2.1.dy = -ln(x)\n",
        encoding="utf-8")
    code, _, err = run_cli("check", str(bad))
    assert code == 3
    assert "ln" in err


def test_tolerance_scaling_is_echoed():
    _, strict, _ = run_json("check", str(SPECS / "skew.conn"))
    _, loose, _ = run_json("check", str(SPECS / "skew.conn"), "--tol", "10")
    assert loose["tolerance.skew_base"] == 10 * strict["tolerance.skew_base"]
    assert loose["verdict"] == strict["verdict"] == "Metric"
