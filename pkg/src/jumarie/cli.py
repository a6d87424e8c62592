"""Command-line interface: ``jumarie verify|solve|ops|diagnose``.

Exit codes: 0 success, 1 input error, 3 a necessary condition is violated,
4 the solver did not converge (output files are still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from jumarie import fraccalc, io, ritz, variational
from jumarie.fraccalc import Grid
from jumarie.lagrangian import Environment, EvaluationError, ExpressionSyntaxError, evaluate, parse, variables

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VIOLATED = 3
EXIT_NOT_CONVERGED = 4

logger = logging.getLogger("jumarie")


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _numerics(pf: io.ProblemFile, args) -> dict:
    numerics = dict(pf.numerics)
    for key in ("grid_n", "tolerance", "seed", "restarts", "basis_depth"):
        value = getattr(args, key, None)
        if value is not None:
            numerics[key] = value
    return numerics


def cmd_verify(args) -> int:
    pf = io.load_problem(args.problem)
    numerics = _numerics(pf, args)
    grid = _grid(numerics["grid_n"])
    curve = io.read_curve(args.curve, pf.problem.n_vars, grid)
    report = variational.verify(pf.problem, curve, numerics["tolerance"])
    _emit(io.dump_json(io.report_dict(pf, report, curve)), args.out)
    return EXIT_OK if report.satisfied else EXIT_VIOLATED


def _grid(n) -> Grid:
    try:
        return Grid(n)
    except ValueError as exc:
        raise io.InputError(str(exc)) from exc


def cmd_solve(args) -> int:
    pf = io.load_problem(args.problem)
    numerics = _numerics(pf, args)
    _grid(numerics["grid_n"])
    config = ritz.SolverConfig(
        basis_depth=numerics["basis_depth"],
        grid_n=numerics["grid_n"],
        restarts=numerics["restarts"],
        seed=numerics["seed"],
        verify_tolerance=numerics["tolerance"],
    )
    if args.max_iter is not None:
        config = dataclasses.replace(config, max_iter=args.max_iter)

    result = ritz.solve(pf.solving_problem(), config)
    sign = -1.0 if pf.maximize else 1.0
    # reports always describe the Lagrangian as written in the file
    report = variational.verify(pf.problem, result.curve, numerics["tolerance"])
    analytic = result.analytic_report
    solver = {
        "exponents": list(result.basis.exponents),
        "coeffs": result.coefficients.tolist(),
        "objective": sign * result.objective,
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "constraint_defects": result.constraint_defects.tolist(),
        "holonomic_defect": result.holonomic_defect,
        "penalty_history": list(result.penalty_history),
        "closed_form_check": {
            "residual_norm_max": [v.norm_max for v in analytic.variables],
            "iso_lambda": None if analytic.iso_lambda is None else (sign * analytic.iso_lambda).tolist(),
            "holonomic_lambda_max_abs": None
            if analytic.holonomic_lambda is None
            else float(np.max(np.abs(analytic.holonomic_lambda.values))),
        },
    }
    doc = io.report_dict(pf, report, result.curve, solver)

    if args.out_curve:
        io.write_curve(args.out_curve, result.curve)
    _emit(io.dump_json(doc), args.out_report)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _function_of_x(text: str, alpha: float, flag: str):
    try:
        e = parse(text, 1, alpha)
    except ExpressionSyntaxError as exc:
        raise io.InputError(f"{flag}: {exc}") from exc
    used = {f"{v.kind}{v.index}" for v in variables(e) if v.kind != "x"}
    if used:
        raise io.InputError(f"{flag} may only use x, found {', '.join(sorted(used))}")
    return e


def _sample_x(text: str, alpha: float, grid: Grid, flag: str) -> fraccalc.GridFunction:
    e = _function_of_x(text, alpha, flag)
    values = evaluate(e, Environment(grid.nodes, [], []))
    return fraccalc.GridFunction(grid, np.broadcast_to(np.asarray(values, dtype=float), (grid.n,)))


def _order(alpha: float) -> float:
    if not 0 < alpha < 1:
        raise io.InputError(f"--alpha must lie in (0, 1), got {alpha}")
    return alpha


def cmd_ops(args) -> int:
    alpha = _order(args.alpha)
    grid = _grid(args.grid_n)
    f = _sample_x(args.expr, alpha, grid, "--expr")
    if args.operation == "deriv":
        column, name = fraccalc.jumarie_deriv(f, alpha), "deriv"
    else:
        column, name = fraccalc.frac_integral_cumulative(f, alpha), "integral"
    table = np.column_stack([grid.nodes, f.values, column.values])
    if args.out:
        io.write_table(args.out, f"x,f,{name}", table)
    else:
        io.write_table(sys.stdout, f"x,f,{name}", table)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    alpha = _order(args.alpha)
    grid = _grid(args.grid_n)
    f = _sample_x(args.f, alpha, grid, "--f")
    g = _sample_x(args.g, alpha, grid, "--g")
    doc = {
        "alpha": alpha,
        "grid": {"n": grid.n, "h": grid.h},
        "f": args.f,
        "g": args.g,
        "diagnostics": io.diagnostics(f, g, alpha),
    }
    _emit(io.dump_json(doc), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jumarie",
        description="Fractional variational problems with Jumarie's derivative on [0, 1].",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def numerics(p, solve=False):
        p.add_argument("--grid-n", dest="grid_n", type=int)
        p.add_argument("--tolerance", type=float)
        if solve:
            p.add_argument("--seed", type=int)
            p.add_argument("--restarts", type=int)
            p.add_argument("--basis-depth", dest="basis_depth", type=int)
            p.add_argument("--max-iter", dest="max_iter", type=int)

    p = sub.add_parser("verify", help="check necessary conditions along a curve")
    p.add_argument("problem")
    p.add_argument("curve")
    numerics(p)
    p.add_argument("--out", help="report path (default: stdout)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("solve", help="Ritz solution of a problem file")
    p.add_argument("problem")
    numerics(p, solve=True)
    p.add_argument("--out-curve", dest="out_curve")
    p.add_argument("--out-report", dest="out_report", help="report path (default: stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("ops", help="apply the derivative or the (dx)^alpha integral")
    p.add_argument("operation", choices=["deriv", "integrate"])
    p.add_argument("--expr", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--grid-n", dest="grid_n", type=int, default=1025)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ops)

    p = sub.add_parser("diagnose", help="Barrow, Leibniz and integration-by-parts defects")
    p.add_argument("--f", required=True)
    p.add_argument("--g", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--grid-n", dest="grid_n", type=int, default=1025)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (io.InputError, EvaluationError, variational.HypothesisViolation, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
