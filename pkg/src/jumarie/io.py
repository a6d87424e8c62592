"""Problem files, curve CSV files and JSON reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from jumarie import fraccalc
from jumarie.fraccalc import Grid, GridFunction
from jumarie.lagrangian import ExpressionSyntaxError, Unary, parse
from jumarie.variational import BoundarySpec, CandidateCurve, IsoConstraint, Problem, VerificationReport


class InputError(ValueError):
    """Malformed problem file, curve file or command-line input."""


NUMERICS_DEFAULTS = {
    "grid_n": 1025,
    "basis_depth": 4,
    "tolerance": 1e-3,
    "seed": 0,
    "restarts": 8,
}

_SECTIONS = {"problem", "boundary", "isoperimetric", "holonomic", "numerics"}
_PROBLEM_KEYS = {"alpha", "n_vars", "lagrangian", "maximize"}


@dataclass
class ProblemFile:
    problem: Problem
    lagrangian_text: str
    maximize: bool
    numerics: dict[str, Any]
    iso_texts: list[str] = field(default_factory=list)
    holonomic_text: Optional[str] = None

    def solving_problem(self) -> Problem:
        """The problem handed to the minimizer; maximization negates the Lagrangian."""
        if not self.maximize:
            return self.problem
        p = self.problem
        return Problem(p.order, p.n_vars, Unary("neg", p.lagrangian), p.boundary, p.isoperimetric, p.holonomic)

    def echo(self) -> dict[str, Any]:
        p = self.problem
        boundary = {}
        for k in range(p.n_vars):
            boundary[f"y{k + 1}_0"] = "free" if p.boundary.left[k] is None else p.boundary.left[k]
            boundary[f"y{k + 1}_1"] = "free" if p.boundary.right[k] is None else p.boundary.right[k]
        return {
            "alpha": p.alpha,
            "n_vars": p.n_vars,
            "lagrangian": self.lagrangian_text,
            "maximize": self.maximize,
            "boundary": boundary,
            "isoperimetric": [
                {"f": text, "K": c.K} for text, c in zip(self.iso_texts, p.isoperimetric)
            ],
            "holonomic": self.holonomic_text,
        }


def _expr(text: Any, where: str, n_vars: int, alpha: float):
    if not isinstance(text, str):
        raise InputError(f"{where} must be a string expression")
    try:
        return parse(text, n_vars, alpha)
    except ExpressionSyntaxError as exc:
        raise InputError(f"{where}: {exc}") from exc


def _real(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"{where} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise InputError(f"{where} must be finite")
    return float(value)


def _int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InputError(f"{where} must be an integer, got {value!r}")
    return value


def _unknown(keys, allowed, where: str) -> None:
    extra = sorted(set(keys) - set(allowed))
    if extra:
        raise InputError(f"unknown key(s) in {where}: {', '.join(extra)}")


def parse_problem_file(text: str) -> ProblemFile:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"problem file is not valid: {exc}") from exc

    _unknown(doc, _SECTIONS, "problem file")
    if "problem" not in doc:
        raise InputError("problem file needs a [problem] section")
    sec = doc["problem"]
    _unknown(sec, _PROBLEM_KEYS, "[problem]")
    for key in ("alpha", "n_vars", "lagrangian"):
        if key not in sec:
            raise InputError(f"[problem] is missing {key!r}")
    alpha = _real(sec["alpha"], "alpha")
    if not 0 < alpha < 1:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    n_vars = _int(sec["n_vars"], "n_vars")
    if n_vars < 1:
        raise InputError("n_vars must be positive")
    maximize = sec.get("maximize", False)
    if not isinstance(maximize, bool):
        raise InputError("maximize must be true or false")
    lagrangian = _expr(sec["lagrangian"], "lagrangian", n_vars, alpha)

    bsec = doc.get("boundary", {})
    allowed = {f"y{k}_{e}" for k in range(1, n_vars + 1) for e in (0, 1)}
    _unknown(bsec, allowed, "[boundary]")
    left, right = [], []
    for k in range(1, n_vars + 1):
        for end, out in ((0, left), (1, right)):
            key = f"y{k}_{end}"
            value = bsec.get(key, "free")
            if value == "free":
                out.append(None)
            else:
                out.append(_real(value, key))

    iso_texts, iso = [], []
    entries = doc.get("isoperimetric", [])
    if isinstance(entries, dict):
        entries = [entries]
    for i, entry in enumerate(entries):
        where = f"[[isoperimetric]] #{i + 1}"
        _unknown(entry, {"f", "K"}, where)
        if "f" not in entry or "K" not in entry:
            raise InputError(f"{where} needs both f and K")
        iso_texts.append(entry["f"])
        iso.append(IsoConstraint(_expr(entry["f"], f"{where} f", n_vars, alpha), _real(entry["K"], f"{where} K")))

    holonomic = holonomic_text = None
    if "holonomic" in doc:
        _unknown(doc["holonomic"], {"g"}, "[holonomic]")
        if "g" not in doc["holonomic"]:
            raise InputError("[holonomic] needs g")
        holonomic_text = doc["holonomic"]["g"]
        holonomic = _expr(holonomic_text, "holonomic g", n_vars, alpha)

    nsec = doc.get("numerics", {})
    _unknown(nsec, NUMERICS_DEFAULTS, "[numerics]")
    numerics = dict(NUMERICS_DEFAULTS)
    for key, value in nsec.items():
        numerics[key] = _real(value, key) if key == "tolerance" else _int(value, key)

    try:
        problem = Problem(alpha, n_vars, lagrangian, BoundarySpec(tuple(left), tuple(right)), tuple(iso), holonomic)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return ProblemFile(problem, sec["lagrangian"], maximize, numerics, iso_texts, holonomic_text)


def load_problem(path: str | Path) -> ProblemFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read problem file: {exc}") from exc
    return parse_problem_file(text)


# {{{ curves

def write_curve(path: str | Path, curve: CandidateCurve) -> None:
    header = ",".join(["x"] + [f"y{k}" for k in range(1, curve.n_vars + 1)])
    table = np.column_stack([curve.grid.nodes, curve.values.T])
    write_table(path, header, table)


def write_table(path, header: str, table: np.ndarray) -> None:
    # 17 significant digits round-trip every double exactly
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")


def read_curve(path: str | Path, n_vars: int, grid: Grid) -> CandidateCurve:
    """Read a curve CSV and place it on ``grid``.

    Off-grid samples are linearly interpolated, provided they are strictly
    increasing and span [0, 1].
    """
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read curve file: {exc}") from exc

    expected = ["x"] + [f"y{k}" for k in range(1, n_vars + 1)]
    if [h.strip() for h in header.split(",")] != expected:
        raise InputError(f"curve header must be {','.join(expected)!r}, got {header!r}")
    if body.shape[1] != len(expected) or body.shape[0] < 2:
        raise InputError("curve file has the wrong number of columns or too few rows")
    if not np.all(np.isfinite(body)):
        raise InputError("curve file contains non-finite values")

    x, ys = body[:, 0], body[:, 1:].T
    if x.size == grid.n and np.array_equal(x, grid.nodes):
        return CandidateCurve(grid, ys)
    if np.any(np.diff(x) <= 0):
        raise InputError("curve abscissae must be strictly increasing")
    if abs(x[0]) > 1e-12 or abs(x[-1] - 1.0) > 1e-12:
        raise InputError("curve abscissae must span [0, 1]")
    return CandidateCurve(grid, np.array([np.interp(grid.nodes, x, y) for y in ys]))

# }}}


# {{{ reports

def _num(value: Any, reason: str, out: dict, key: str) -> None:
    """Store a finite number, or ``null`` plus a ``<key>_reason`` entry."""
    if value is None or not np.isfinite(value):
        out[key] = None
        out[f"{key}_reason"] = reason
    else:
        out[key] = float(value)


def diagnostics(f: GridFunction, g: GridFunction, order) -> dict[str, float]:
    return {
        "barrow_defect": fraccalc.barrow_defect(f, order),
        "leibniz_defect_max": float(np.max(np.abs(fraccalc.leibniz_defect(f, g, order).values))),
        "ibp_defect": fraccalc.ibp_defect(f, g, order),
    }


def report_dict(
    pf: ProblemFile,
    report: VerificationReport,
    curve: CandidateCurve,
    solver: Optional[dict[str, Any]] = None,
) -> dict[str, Any]:
    grid = curve.grid
    variables = []
    for k, var in enumerate(report.variables, start=1):
        entry: dict[str, Any] = {"name": f"y{k}"}
        _num(var.norm_max, "residual is not finite", entry, "residual_norm_max")
        _num(var.norm_l2, "residual is not finite", entry, "residual_norm_l2")

        def flag(v):
            return "not_applicable" if v is None else ("satisfied" if v else "violated")

        entry["nbc"] = {
            "x0": var.nbc.x0,
            "x1": var.nbc.x1,
            "flags": {end: flag(v) for end, v in var.nbc_flags.items()},
        }
        variables.append(entry)

    iso = None
    if pf.problem.isoperimetric:
        iso = {
            "lambda": None if report.iso_lambda is None else [float(v) for v in report.iso_lambda],
            "defects": [float(v) for v in report.iso_defects],
        }
        if report.iso_lambda is None:
            iso["lambda_reason"] = report.notes.get("iso.lambda", "not estimated")

    holonomic = None
    if pf.problem.holonomic is not None:
        holonomic = {}
        if report.holonomic_lambda is None:
            holonomic["lambda_stats"] = None
            holonomic["lambda_stats_reason"] = report.notes.get("holonomic.lambda", "not computed")
        else:
            lam = report.holonomic_lambda.values
            holonomic["lambda_stats"] = {
                "min": float(lam.min()),
                "max": float(lam.max()),
                "max_abs": float(np.max(np.abs(lam))),
                "trimmed_max_abs": fraccalc.trimmed_max(lam),
            }
        _num(report.holonomic_defect, "not computed", holonomic, "constraint_defect")

    n = curve.n_vars
    return {
        "problem": pf.echo(),
        "grid": {"n": grid.n, "h": grid.h},
        "tolerance": report.tolerance,
        "status": "satisfied" if report.satisfied else "violated",
        "variables": variables,
        "iso": iso,
        "holonomic": holonomic,
        "solver": solver,
        "diagnostics": diagnostics(curve.component(1), curve.component(n), pf.problem.order),
        "notes": dict(report.notes),
    }


def dump_json(doc: dict[str, Any]) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"

# }}}
