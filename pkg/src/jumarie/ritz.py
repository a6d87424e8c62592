"""Direct (Ritz) minimization over fractional power bases.

Each dependent variable is expanded as ``y(x) = sum_j c_j x**e_j`` with
exponents ``0, alpha, 2 alpha, ...``. Every basis element has a closed-form
fractional derivative, so the discretized functional only carries the
quadrature error of the (dx)^alpha integral. Boundary values are imposed by
eliminating coefficients, integral and holonomic constraints by a quadratic
penalty, and the free coefficients are found with Nelder-Mead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from jumarie import fraccalc, variational
from jumarie.fraccalc import Grid, GridFunction, as_order
from jumarie.lagrangian import Environment, EvaluationError, Expression
from jumarie.variational import BoundarySpec, CandidateCurve, Problem, VerificationReport

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FracBasis:
    exponents: tuple[float, ...]

    def __post_init__(self) -> None:
        exps = tuple(float(e) for e in self.exponents)
        if not exps or exps[0] != 0.0:
            raise ValueError("the first basis exponent must be 0 (the constant term)")
        if any(b <= a for a, b in zip(exps, exps[1:])):
            raise ValueError("basis exponents must be distinct and increasing")
        object.__setattr__(self, "exponents", exps)

    @classmethod
    def fractional(cls, order, depth: int, extra: Sequence[float] = ()) -> "FracBasis":
        """Exponents ``0, alpha, ..., depth * alpha`` plus any ``extra`` ones."""
        alpha = as_order(order).alpha
        exps = {k * alpha for k in range(depth + 1)} | {float(e) for e in extra}
        return cls(tuple(sorted(exps)))

    def __len__(self) -> int:
        return len(self.exponents)

    def check(self, order) -> None:
        alpha = as_order(order).alpha
        for e in self.exponents:
            if 0.0 < e < alpha:
                raise ValueError(
                    f"exponent {e} < alpha has an unbounded derivative at x = 0"
                )

    def derivative_coefficients(self, order) -> np.ndarray:
        return np.array([fraccalc.power_coefficient(e, order) for e in self.exponents])

    def tables(self, grid: Grid, order) -> tuple[np.ndarray, np.ndarray]:
        """Basis values and their fractional derivatives, shape ``(len(basis), n)``."""
        self.check(order)
        alpha = as_order(order).alpha
        x = grid.nodes
        values = np.array([x**e for e in self.exponents])
        coef = self.derivative_coefficients(order)
        derivs = np.array(
            [np.zeros_like(x) if e == 0.0 else c * x ** (e - alpha) for e, c in zip(self.exponents, coef)]
        )
        return values, derivs


def synthesize_curve(
    basis: FracBasis, coeffs, grid: Grid, order
) -> tuple[CandidateCurve, np.ndarray]:
    """Curve values and closed-form derivatives for coefficient rows ``coeffs``."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if coeffs.shape[1] != len(basis):
        raise ValueError(f"expected {len(basis)} coefficients per variable, got {coeffs.shape[1]}")
    values, derivs = basis.tables(grid, order)
    return CandidateCurve(grid, coeffs @ values), coeffs @ derivs


def objective(p: Problem, basis: FracBasis, coeffs, grid: Grid) -> float:
    """Discretized ``J(y)`` with closed-form derivatives inside the Lagrangian."""
    curve, dy = synthesize_curve(basis, coeffs, grid, p.order)
    env = Environment(grid.nodes, list(curve.values), list(dy))
    w = fraccalc.integral_weights(grid, p.order)
    return float(w @ variational.sample(p.lagrangian, env, grid))


@dataclass(frozen=True)
class BoundaryMap:
    """Affine map ``coeffs = offset + reshape(matrix @ params)``."""

    offset: np.ndarray
    matrix: np.ndarray

    @property
    def n_free(self) -> int:
        return self.matrix.shape[1]

    def expand(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float).reshape(self.n_free)
        return self.offset + (self.matrix @ params).reshape(self.offset.shape)


def apply_boundary(basis: FracBasis, boundary: BoundarySpec) -> BoundaryMap:
    """Eliminate coefficients pinned by fixed endpoint values.

    ``y(0) = a`` fixes the constant coefficient; ``y(1) = b`` fixes the last
    coefficient through ``sum_j c_j = b``.
    """
    m = len(basis)
    nv = boundary.n_vars
    offset = np.zeros((nv, m))
    columns = []
    for k in range(nv):
        left, right = boundary.left[k], boundary.right[k]
        if left is not None and right is not None and m < 2:
            raise ValueError("two fixed endpoints need at least two basis functions")
        free = list(range(m))
        if left is not None:
            offset[k, 0] = left
            free.remove(0)
        if right is not None:
            free.remove(m - 1)
            offset[k, m - 1] = right - (left if left is not None else 0.0)
        for j in free:
            col = np.zeros((nv, m))
            col[k, j] = 1.0
            if right is not None:
                col[k, m - 1] = -1.0
            columns.append(col.ravel())
    matrix = np.column_stack(columns) if columns else np.zeros((nv * m, 0))
    return BoundaryMap(offset, matrix)


@dataclass(frozen=True)
class SolverConfig:
    basis_depth: int = 4
    grid_n: int = 1025
    extra_exponents: tuple[float, ...] = ()
    #: edge length of the initial simplex and spread of restart perturbations
    initial_scale: float = 0.5
    max_iter: int = 4000
    #: Nelder-Mead stops once the objective spread over the simplex is below this
    tolerance: float = 1e-12
    xtol: float = 1e-9
    penalty_initial: float = 10.0
    penalty_growth: float = 10.0
    penalty_rounds: int = 6
    restarts: int = 8
    seed: int = 0
    #: tolerance for the satisfied/violated flags of the embedded report
    verify_tolerance: float = 1e-3

    def __post_init__(self) -> None:
        positive = (
            self.basis_depth, self.grid_n, self.initial_scale, self.max_iter, self.tolerance,
            self.xtol, self.penalty_initial, self.penalty_rounds, self.restarts,
        )
        if any(not v > 0 for v in positive):
            raise ValueError("solver settings must be positive")
        if not self.penalty_growth > 1:
            raise ValueError("penalty growth factor must exceed 1")


@dataclass
class SolverResult:
    basis: FracBasis
    coefficients: np.ndarray
    objective: float
    constraint_defects: np.ndarray
    holonomic_defect: Optional[float]
    converged: bool
    iterations: int
    curve: CandidateCurve
    report: VerificationReport
    #: the same checks with the closed-form derivatives of the basis
    analytic_report: Optional[VerificationReport] = None
    #: constraint defect at the end of each penalty round of the best restart
    penalty_history: list[float] = field(default_factory=list)
    #: final penalized value of every restart, in restart order
    restart_values: list[float] = field(default_factory=list)
    #: best simplex value after every iteration of the last round of the best restart
    trace: list[float] = field(default_factory=list)

    @property
    def iso_lambda(self) -> Optional[np.ndarray]:
        return self.report.iso_lambda

    @property
    def holonomic_lambda(self) -> Optional[GridFunction]:
        return self.report.holonomic_lambda


class _Functional:
    """Objective and constraint evaluation for one problem on one grid."""

    def __init__(self, p: Problem, basis: FracBasis, bmap: BoundaryMap, grid: Grid) -> None:
        self.p = p
        self.bmap = bmap
        self.grid = grid
        self.values, self.derivs = basis.tables(grid, p.order)
        self.weights = fraccalc.integral_weights(grid, p.order)
        self.targets = np.array([c.K for c in p.isoperimetric])

    def env(self, params) -> tuple[np.ndarray, Environment]:
        coeffs = self.bmap.expand(params)
        y = coeffs @ self.values
        dy = coeffs @ self.derivs
        return coeffs, Environment(self.grid.nodes, list(y), list(dy))

    def integrate(self, e: Expression, env: Environment) -> float:
        return float(self.weights @ variational.sample(e, env, self.grid))

    def parts(self, params) -> tuple[float, np.ndarray, float]:
        _, env = self.env(params)
        J = self.integrate(self.p.lagrangian, env)
        iso = np.array([self.integrate(c.f, env) for c in self.p.isoperimetric]) - self.targets
        hol = 0.0
        if self.p.holonomic is not None:
            hol = float(np.max(variational.sample(self.p.holonomic, env, self.grid) ** 2))
        return J, iso, hol

    def penalized(self, params, weight: float) -> float:
        try:
            J, iso, hol = self.parts(params)
        except (EvaluationError, ValueError):
            return np.inf
        value = J + weight * (float(iso @ iso) + hol)
        return value if np.isfinite(value) else np.inf

    def defect(self, params) -> float:
        _, iso, hol = self.parts(params)
        return float(np.sqrt(iso @ iso + hol))


@dataclass
class _Run:
    params: np.ndarray
    value: float
    converged: bool
    iterations: int
    history: list[float]
    trace: list[float]


def _nelder_mead(fun, x0: np.ndarray, config: SolverConfig, max_iter: int):
    dim = x0.size
    simplex = np.vstack([x0, x0 + config.initial_scale * np.eye(dim)])
    trace: list[float] = []

    def record(intermediate_result):
        trace.append(float(intermediate_result.fun))

    res = minimize(
        fun,
        x0,
        method="Nelder-Mead",
        callback=record,
        options={
            "maxiter": max_iter,
            "maxfev": 50 * max_iter,
            "fatol": config.tolerance,
            "xatol": config.xtol,
            "initial_simplex": simplex,
        },
    )
    return res, trace


def _run(fn: _Functional, x0: np.ndarray, config: SolverConfig, constrained: bool) -> _Run:
    rounds = config.penalty_rounds if constrained else 1
    weight = config.penalty_initial
    params = x0
    iterations = 0
    history: list[float] = []
    trace: list[float] = []
    converged = True
    value = fn.penalized(params, weight)
    for _ in range(rounds):
        res, trace = _nelder_mead(lambda z, w=weight: fn.penalized(z, w), params, config, config.max_iter)
        iterations += int(res.nit)
        converged = res.status == 0
        params = np.asarray(res.x, dtype=float)
        value = float(res.fun)
        if constrained:
            history.append(fn.defect(params))
        weight *= config.penalty_growth
    return _Run(params, value, converged, iterations, history, trace)


def solve(p: Problem, config: SolverConfig = SolverConfig()) -> SolverResult:
    """Minimize ``J`` over the configured basis.

    Restarts begin at zero (restart 0) and at seeded Gaussian perturbations
    of it; the lowest final penalized value wins, ties going to the earliest
    restart. The result embeds a full :func:`variational.verify` report of
    the grid-sampled optimum.
    """
    grid = Grid(config.grid_n)
    basis = FracBasis.fractional(p.order, config.basis_depth, config.extra_exponents)
    bmap = apply_boundary(basis, p.boundary)
    fn = _Functional(p, basis, bmap, grid)
    constrained = bool(p.isoperimetric) or p.holonomic is not None

    if bmap.n_free == 0:
        best = _Run(np.zeros(0), fn.penalized(np.zeros(0), 0.0), True, 0, [], [])
        if constrained:
            best.history = [fn.defect(best.params)]
        values = [best.value]
    else:
        rng = np.random.default_rng(config.seed)
        best = None
        values = []
        for r in range(config.restarts):
            x0 = np.zeros(bmap.n_free)
            if r > 0:
                x0 = x0 + config.initial_scale * rng.standard_normal(bmap.n_free)
            run = _run(fn, x0, config, constrained)
            logger.debug("restart %d: value %.6e converged=%s", r, run.value, run.converged)
            values.append(run.value)
            if best is None or run.value < best.value:
                best = run

    coeffs = bmap.expand(best.params)
    J, iso, hol = fn.parts(best.params)
    curve, dy = synthesize_curve(basis, coeffs, grid, p.order)
    report = variational.verify(p, curve, config.verify_tolerance)
    analytic = variational.verify(p, curve.with_derivatives(dy), config.verify_tolerance)
    return SolverResult(
        basis=basis,
        coefficients=coeffs,
        objective=J,
        constraint_defects=np.abs(iso),
        holonomic_defect=float(np.sqrt(hol)) if p.holonomic is not None else None,
        converged=best.converged,
        iterations=best.iterations,
        curve=curve,
        report=report,
        analytic_report=analytic,
        penalty_history=best.history,
        restart_values=values,
        trace=best.trace,
    )


__all__ = [
    "BoundaryMap",
    "FracBasis",
    "SolverConfig",
    "SolverResult",
    "apply_boundary",
    "objective",
    "solve",
    "synthesize_curve",
]
