import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from jumarie import io
from jumarie.cli import EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VIOLATED, main
from jumarie.fraccalc import Grid
from jumarie.variational import CandidateCurve

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"


def write_curve(path, grid, *funcs):
    io.write_curve(path, CandidateCurve.from_functions(grid, *funcs))
    return str(path)


def run_json(capsys, argv):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


# {{{ verify


def test_verify_example(tmp_path, capsys):
    curve = write_curve(tmp_path / "c.csv", Grid(4097), lambda x: x**0.5 + 1)
    code, report = run_json(capsys, ["verify", str(PROBLEMS / "stationary_square.toml"), curve])
    assert code == EXIT_OK
    assert report["status"] == "satisfied"
    assert report["variables"][0]["residual_norm_max"] <= 1e-2
    assert report["variables"][0]["nbc"]["flags"] == {"x0": "not_applicable", "x1": "not_applicable"}


def test_verify_constant_free_ends(tmp_path, capsys):
    curve = write_curve(tmp_path / "c.csv", Grid(1025), lambda x: 0 * x + 0.75)
    code, report = run_json(capsys, ["verify", str(PROBLEMS / "arclength_free.toml"), curve])
    assert code == EXIT_OK
    var = report["variables"][0]
    assert var["residual_norm_max"] <= 1e-10
    assert abs(var["nbc"]["x0"]) <= 1e-10 and abs(var["nbc"]["x1"]) <= 1e-10


def test_verify_violation_exit_code(tmp_path, capsys):
    curve = write_curve(tmp_path / "c.csv", Grid(1025), lambda x: x**2)
    code, report = run_json(capsys, ["verify", str(PROBLEMS / "arclength_free.toml"), curve])
    assert code == EXIT_VIOLATED
    assert report["status"] == "violated"
    assert report["variables"][0]["nbc"]["flags"]["x1"] == "violated"


def test_verify_interpolates_off_grid_curves(tmp_path, capsys):
    x = np.linspace(0, 1, 101)
    path = tmp_path / "c.csv"
    io.write_table(path, "x,y1", np.column_stack([x, np.full_like(x, 2.0)]))
    code, _ = run_json(capsys, ["verify", str(PROBLEMS / "arclength_free.toml"), str(path)])
    assert code == EXIT_OK


def test_verify_out_file(tmp_path, capsys):
    curve = write_curve(tmp_path / "c.csv", Grid(1025), lambda x: 0 * x)
    out = tmp_path / "r.json"
    assert main(["verify", str(PROBLEMS / "arclength_free.toml"), curve, "--out", str(out)]) == EXIT_OK
    assert capsys.readouterr().out == ""
    assert json.loads(out.read_text())["grid"]["n"] == 1025


def test_verify_holonomic_report(tmp_path, capsys):
    curve = write_curve(tmp_path / "c.csv", Grid(4097), lambda x: 0.5 * x**0.5, lambda x: 0.5 * x**0.5)
    code, report = run_json(capsys, ["verify", str(PROBLEMS / "holonomic.toml"), curve])
    stats = report["holonomic"]["lambda_stats"]
    assert set(stats) == {"min", "max", "max_abs", "trimmed_max_abs"}
    assert report["holonomic"]["constraint_defect"] <= 1e-15
    assert code in (EXIT_OK, EXIT_VIOLATED)

# }}}


# {{{ solve


def test_solve_round_trip(tmp_path, capsys):
    curve_path = tmp_path / "sol.csv"
    report_path = tmp_path / "solve.json"
    code = main([
        "solve", str(PROBLEMS / "power_fit.toml"), "--grid-n", "513",
        "--out-curve", str(curve_path), "--out-report", str(report_path),
    ])
    assert code == EXIT_OK
    solved = json.loads(report_path.read_text())
    assert solved["solver"]["converged"] is True
    assert solved["solver"]["objective"] <= 1e-6

    code = main(["verify", str(PROBLEMS / "power_fit.toml"), str(curve_path), "--grid-n", "513"])
    verified = json.loads(capsys.readouterr().out)
    for a, b in zip(solved["variables"], verified["variables"]):
        assert a["residual_norm_max"] == b["residual_norm_max"]
        assert a["residual_norm_l2"] == b["residual_norm_l2"]
    assert code == (EXIT_OK if solved["status"] == "satisfied" else EXIT_VIOLATED)


def test_solve_is_byte_identical(tmp_path):
    outputs = []
    for run in range(2):
        curve, report = tmp_path / f"c{run}.csv", tmp_path / f"r{run}.json"
        main([
            "solve", str(PROBLEMS / "isoperimetric.toml"), "--grid-n", "257", "--seed", "3",
            "--out-curve", str(curve), "--out-report", str(report),
        ])
        outputs.append((curve.read_bytes(), report.read_bytes()))
    assert outputs[0] == outputs[1]


def test_solve_not_converged(tmp_path):
    code = main([
        "solve", str(PROBLEMS / "power_fit.toml"), "--grid-n", "129", "--max-iter", "1",
        "--restarts", "1", "--out-report", str(tmp_path / "r.json"), "--out-curve", str(tmp_path / "c.csv"),
    ])
    assert code == EXIT_NOT_CONVERGED
    assert (tmp_path / "c.csv").exists()
    assert json.loads((tmp_path / "r.json").read_text())["solver"]["converged"] is False


def test_maximize_flips_the_sign(tmp_path, capsys):
    text = (PROBLEMS / "power_fit.toml").read_text()
    path = tmp_path / "max.toml"
    path.write_text(text.replace('lagrangian = "(Dy - gamma(alpha+1))^2"',
                                 'lagrangian = "-(Dy - gamma(alpha+1))^2"\nmaximize = true'))
    code, report = run_json(capsys, ["solve", str(path), "--grid-n", "257", "--restarts", "2"])
    assert code == EXIT_OK
    assert report["problem"]["maximize"] is True
    assert report["solver"]["objective"] >= -1e-6
    assert report["solver"]["objective"] <= 0.0
    assert np.allclose(report["solver"]["coeffs"][0], [0, 1, 0, 0], atol=5e-2)

# }}}


# {{{ ops and diagnose


def test_ops_deriv(capsys):
    assert main(["ops", "deriv", "--expr", "x^alpha", "--alpha", "0.5", "--grid-n", "257"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x,f,deriv"
    table = np.loadtxt(lines[1:], delimiter=",")
    assert table.shape == (257, 3)
    assert np.all(np.isfinite(table))
    assert np.allclose(table[128:250, 2], 0.886226925452758, rtol=1e-3)


def test_ops_integrate(tmp_path):
    out = tmp_path / "i.csv"
    assert main(["ops", "integrate", "--expr", "1", "--alpha", "0.3", "--grid-n", "65", "--out", str(out)]) == EXIT_OK
    with open(out) as fh:
        assert fh.readline().strip() == "x,f,integral"
        table = np.loadtxt(fh, delimiter=",")
    assert np.allclose(table[:, 2], table[:, 0] ** 0.3, rtol=1e-12, atol=0)


def test_diagnose(capsys):
    code, doc = run_json(capsys, ["diagnose", "--f", "x^0.5", "--g", "x^0.5", "--alpha", "0.5", "--grid-n", "1025"])
    assert code == EXIT_OK
    assert doc["diagnostics"]["ibp_defect"] == pytest.approx(0.505855, abs=5e-3)
    assert set(doc["diagnostics"]) == {"barrow_defect", "leibniz_defect_max", "ibp_defect"}


@pytest.mark.parametrize(
    "argv",
    [
        ["ops", "deriv", "--expr", "x +", "--alpha", "0.5"],
        ["ops", "deriv", "--expr", "y", "--alpha", "0.5"],
        ["ops", "deriv", "--expr", "x", "--alpha", "1.5"],
        ["ops", "deriv", "--expr", "x", "--alpha", "0.5", "--grid-n", "3"],
        ["ops", "deriv", "--expr", "ln(x)", "--alpha", "0.5"],
        ["diagnose", "--f", "x", "--alpha", "0.5"],
        ["bogus"],
        [],
    ],
)
def test_bad_arguments(argv, capsys):
    assert main(argv) == EXIT_INPUT

# }}}


# {{{ malformed input files


BASE = """
[problem]
alpha = 0.5
n_vars = 1
lagrangian = "Dy^2"
"""


@pytest.mark.parametrize(
    "text",
    [
        "not toml [",
        "[numerics]\ngrid_n = 10\n",
        BASE.replace("0.5", "1.0", 1),
        BASE.replace('"Dy^2"', '"Dy^"'),
        BASE + "\n[boundary]\ny2_0 = 1.0\n",
        BASE + "\n[boundary]\ny1_0 = \"fixed\"\n",
        BASE + "\n[numerics]\ngrid_n = 1.5\n",
        BASE + "\n[numerics]\nspeed = 3\n",
        BASE + "\n[[isoperimetric]]\nf = \"y\"\n",
        BASE + "\n[holonomic]\ng = \"y - x\"\n",
        BASE.replace("n_vars = 1", "n_vars = 0"),
        BASE + "\nextra = 1\n",
    ],
)
def test_malformed_problem_files(tmp_path, text, capsys):
    path = tmp_path / "p.toml"
    path.write_text(text)
    curve = write_curve(tmp_path / "c.csv", Grid(33), lambda x: x)
    assert main(["verify", str(path), curve]) == EXIT_INPUT
    assert "error:" in capsys.readouterr().err


@pytest.mark.parametrize(
    "body",
    [
        "x,y\n0,0\n1,1\n",
        "x,y1\n0,0\n",
        "x,y1\n0,0\n0.5,nan\n1,1\n",
        "x,y1\n0,0\n0.7,1\n0.5,1\n1,1\n",
        "x,y1\n0.1,0\n1,1\n",
        "x,y1\n0,0,3\n1,1,3\n",
        "x,y1\n0,a\n1,1\n",
    ],
)
def test_malformed_curve_files(tmp_path, body):
    path = tmp_path / "c.csv"
    path.write_text(body)
    assert main(["verify", str(PROBLEMS / "arclength_free.toml"), str(path)]) == EXIT_INPUT


def test_missing_files(tmp_path):
    assert main(["verify", str(tmp_path / "none.toml"), str(tmp_path / "none.csv")]) == EXIT_INPUT
    assert main(["verify", str(PROBLEMS / "power_fit.toml"), str(tmp_path / "none.csv")]) == EXIT_INPUT

# }}}


# {{{ serialization


@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=17, max_size=17))
def test_curve_csv_round_trip_is_bit_exact(tmp_path, values):
    grid = Grid(17)
    curve = CandidateCurve(grid, np.array(values))
    path = tmp_path / "c.csv"
    io.write_curve(path, curve)
    back = io.read_curve(path, 1, grid)
    assert np.array_equal(back.values, curve.values)
    assert np.array_equal(np.signbit(back.values), np.signbit(curve.values))


def test_report_uses_null_with_reason():
    out = {}
    io._num(float("nan"), "residual is not finite", out, "residual_norm_max")
    assert out == {"residual_norm_max": None, "residual_norm_max_reason": "residual is not finite"}


def test_problem_file_defaults():
    pf = io.parse_problem_file(BASE)
    assert pf.numerics == io.NUMERICS_DEFAULTS
    assert pf.problem.boundary.left == (None,) and pf.problem.boundary.right == (None,)
    assert pf.echo()["boundary"] == {"y1_0": "free", "y1_1": "free"}

# }}}
