"""Necessary optimality conditions evaluated along candidate curves.

Every condition has the shape ``dL/dy_k - D^alpha (dL/dDy_k)``. The partials
are symbolic, sampled along the curve, and the outer Jumarie derivative is
the discrete operator from :mod:`jumarie.fraccalc`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from jumarie import fraccalc
from jumarie.fraccalc import FracOrder, Grid, GridFunction, as_order, trimmed
from jumarie.lagrangian import (
    DY,
    Y,
    Binary,
    Const,
    Environment,
    EvaluationError,
    Expression,
    diff,
    evaluate,
    variables,
)

#: Constraint residuals with a trimmed max-norm at or below this make the
#: curve an extremal of the constraint functional.
EXTREMAL_GUARD = 1e-3
#: Smallest admissible ``|dg/dy_n|`` for the holonomic multiplier.
HOLONOMIC_GUARD = 1e-8


class DegenerateExtremalError(ValueError):
    """The curve is an extremal of an isoperimetric constraint functional."""


class RankDeficiencyError(ValueError):
    """Constraint residuals are linearly dependent; the multipliers are not unique."""


class HypothesisViolation(ValueError):
    """``dg/dy_n`` vanishes at some node."""

    def __init__(self, message: str, node: int) -> None:
        self.node = node
        super().__init__(message)


# {{{ problem description

@dataclass(frozen=True)
class BoundarySpec:
    """Endpoint data per dependent variable: a float pins the value, ``None`` leaves it free."""

    left: tuple[Optional[float], ...]
    right: tuple[Optional[float], ...]

    def __post_init__(self) -> None:
        if len(self.left) != len(self.right):
            raise ValueError("left and right boundary data disagree in length")
        for v in (*self.left, *self.right):
            if v is not None and not np.isfinite(v):
                raise ValueError(f"fixed boundary values must be finite, got {v!r}")
        object.__setattr__(self, "left", tuple(None if v is None else float(v) for v in self.left))
        object.__setattr__(self, "right", tuple(None if v is None else float(v) for v in self.right))

    @classmethod
    def free(cls, n_vars: int = 1) -> "BoundarySpec":
        return cls((None,) * n_vars, (None,) * n_vars)

    @classmethod
    def fixed(cls, left: Sequence[float], right: Sequence[float]) -> "BoundarySpec":
        return cls(tuple(left), tuple(right))

    @property
    def n_vars(self) -> int:
        return len(self.left)


@dataclass(frozen=True)
class IsoConstraint:
    f: Expression
    K: float


@dataclass(frozen=True, eq=False)
class Problem:
    order: FracOrder
    n_vars: int
    lagrangian: Expression
    boundary: BoundarySpec
    isoperimetric: tuple[IsoConstraint, ...] = ()
    holonomic: Optional[Expression] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "order", as_order(self.order))
        object.__setattr__(self, "isoperimetric", tuple(self.isoperimetric))
        if self.n_vars < 1:
            raise ValueError("a problem needs at least one dependent variable")
        if self.boundary.n_vars != self.n_vars:
            raise ValueError("boundary data does not match the number of variables")
        exprs = [self.lagrangian] + [c.f for c in self.isoperimetric]
        if self.holonomic is not None:
            exprs.append(self.holonomic)
            if self.n_vars < 2:
                raise ValueError("a holonomic constraint needs at least two dependent variables")
            if any(v.kind == "Dy" for v in variables(self.holonomic)):
                raise ValueError("the holonomic constraint may not depend on Dy")
        for e in exprs:
            for v in variables(e):
                if v.index > self.n_vars:
                    raise ValueError(f"{v.kind}{v.index} exceeds n_vars = {self.n_vars}")

    @property
    def alpha(self) -> float:
        return self.order.alpha

    @cached_property
    def lagrangian_partials(self) -> tuple[tuple[Expression, Expression], ...]:
        return _partials(self.lagrangian, self.n_vars)

    @cached_property
    def constraint_partials(self) -> tuple[tuple[tuple[Expression, Expression], ...], ...]:
        return tuple(_partials(c.f, self.n_vars) for c in self.isoperimetric)

    @cached_property
    def holonomic_partials(self) -> tuple[Expression, ...]:
        if self.holonomic is None:
            return ()
        return tuple(diff(self.holonomic, Y(k)) for k in range(1, self.n_vars + 1))

    def augmented(self, lambdas: Sequence[float]) -> "Problem":
        """The same problem with ``L - sum_i lambda_i f_i`` as Lagrangian and no constraints."""
        if len(lambdas) != len(self.isoperimetric):
            raise ValueError(
                f"expected {len(self.isoperimetric)} multipliers, got {len(lambdas)}"
            )
        lag = self.lagrangian
        for lam, c in zip(lambdas, self.isoperimetric):
            lag = Binary("-", lag, Binary("*", Const(float(lam)), c.f))
        return Problem(self.order, self.n_vars, lag, self.boundary)


def _partials(e: Expression, n_vars: int) -> tuple[tuple[Expression, Expression], ...]:
    return tuple((diff(e, Y(k)), diff(e, DY(k))) for k in range(1, n_vars + 1))


@dataclass(frozen=True, eq=False)
class CandidateCurve:
    """Grid samples of every dependent variable.

    ``derivatives`` optionally supplies the fractional derivatives when they
    are known in closed form; otherwise they are computed with
    :func:`jumarie.fraccalc.jumarie_deriv`.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)
    derivatives: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        values = np.atleast_2d(np.array(self.values, dtype=float))
        if values.shape[1] != self.grid.n:
            raise ValueError(f"curve has {values.shape[1]} samples, grid has {self.grid.n}")
        if not np.all(np.isfinite(values)):
            raise ValueError("curve values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if self.derivatives is not None:
            dy = np.atleast_2d(np.array(self.derivatives, dtype=float))
            if dy.shape != values.shape:
                raise ValueError("derivative samples must match the curve shape")
            dy.flags.writeable = False
            object.__setattr__(self, "derivatives", dy)

    @classmethod
    def from_functions(cls, grid: Grid, *funcs) -> "CandidateCurve":
        return cls(grid, np.array([grid.sample(f).values for f in funcs]))

    @property
    def n_vars(self) -> int:
        return self.values.shape[0]

    def component(self, k: int) -> GridFunction:
        """The ``k``-th variable (1-based)."""
        return GridFunction(self.grid, self.values[k - 1])

    def with_derivatives(self, derivatives) -> "CandidateCurve":
        return CandidateCurve(self.grid, self.values, derivatives)

# }}}


# {{{ conditions

def curve_derivatives(p: Problem, c: CandidateCurve) -> list[GridFunction]:
    """Fractional derivative of every component of ``c``."""
    _check_curve(p, c)
    if c.derivatives is not None:
        return [GridFunction(c.grid, row) for row in c.derivatives]
    return [fraccalc.jumarie_deriv(c.component(k), p.order) for k in range(1, c.n_vars + 1)]


def _check_curve(p: Problem, c: CandidateCurve) -> None:
    if c.n_vars != p.n_vars:
        raise ValueError(f"curve has {c.n_vars} variables, problem has {p.n_vars}")


def _environment(c: CandidateCurve, dy: Sequence[GridFunction]) -> Environment:
    return Environment(c.grid.nodes, list(c.values), [d.values for d in dy])


def sample(e: Expression, env: Environment, grid: Grid) -> np.ndarray:
    value = evaluate(e, env)
    return np.broadcast_to(np.asarray(value, dtype=float), (grid.n,)).copy()


def _el_residuals(partials, order, env, grid) -> list[GridFunction]:
    out = []
    for dldy, dlddy in partials:
        momentum = GridFunction(grid, sample(dlddy, env, grid))
        out.append(
            GridFunction(
                grid,
                sample(dldy, env, grid) - fraccalc.jumarie_deriv(momentum, order).values,
            )
        )
    return out


def el_residual(p: Problem, c: CandidateCurve) -> list[GridFunction]:
    """``dL/dy_k - D^alpha dL/dDy_k`` for every variable, raw Lagrangian only."""
    dy = curve_derivatives(p, c)
    env = _environment(c, dy)
    return _el_residuals(p.lagrangian_partials, p.order, env, c.grid)


@dataclass(frozen=True)
class EndpointCondition:
    """``dL/dDy_k`` at both ends, and whether each end is free."""

    x0: float
    x1: float
    free0: bool
    free1: bool

    def flags(self, tolerance: float) -> dict[str, Optional[bool]]:
        """Satisfied/violated per end; ``None`` where the end is fixed."""
        return {
            "x0": (abs(self.x0) <= tolerance) if self.free0 else None,
            "x1": (abs(self.x1) <= tolerance) if self.free1 else None,
        }


def natural_bc(p: Problem, c: CandidateCurve) -> list[EndpointCondition]:
    dy = curve_derivatives(p, c)
    env = _environment(c, dy)
    out = []
    for k, (_, dlddy) in enumerate(p.lagrangian_partials):
        momentum = sample(dlddy, env, c.grid)
        out.append(
            EndpointCondition(
                float(momentum[0]),
                float(momentum[-1]),
                p.boundary.left[k] is None,
                p.boundary.right[k] is None,
            )
        )
    return out


def iso_residual(p: Problem, c: CandidateCurve, lambdas: Sequence[float]) -> list[GridFunction]:
    """EL residual of ``F = L - sum_i lambda_i f_i``."""
    return el_residual(p.augmented(lambdas), c)


def constraint_residuals(p: Problem, c: CandidateCurve) -> list[list[GridFunction]]:
    """EL residual of every isoperimetric integrand ``f_i``, per variable."""
    dy = curve_derivatives(p, c)
    env = _environment(c, dy)
    return [_el_residuals(parts, p.order, env, c.grid) for parts in p.constraint_partials]


def estimate_lambda_iso(
    p: Problem, c: CandidateCurve, guard: float = EXTREMAL_GUARD
) -> np.ndarray:
    """Least-squares multipliers over the trimmed nodes of all variables."""
    if not p.isoperimetric:
        raise ValueError("the problem has no isoperimetric constraints")
    target = np.concatenate([trimmed(r) for r in el_residual(p, c)])
    columns = []
    for i, per_var in enumerate(constraint_residuals(p, c)):
        col = np.concatenate([trimmed(r) for r in per_var])
        if np.max(np.abs(col)) <= guard:
            raise DegenerateExtremalError(
                f"the curve is an extremal of isoperimetric constraint {i + 1}"
                f" (residual {np.max(np.abs(col)):.3e} <= {guard:g})"
            )
        columns.append(col)
    A = np.column_stack(columns)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise RankDeficiencyError("isoperimetric constraint residuals are linearly dependent")
    return np.linalg.solve(A.T @ A, A.T @ target)


def constraint_values(p: Problem, c: CandidateCurve) -> np.ndarray:
    """``G_i(y) = int_0^1 f_i (dx)^alpha`` for every isoperimetric constraint."""
    dy = curve_derivatives(p, c)
    env = _environment(c, dy)
    w = fraccalc.integral_weights(c.grid, p.order)
    return np.array([w @ sample(con.f, env, c.grid) for con in p.isoperimetric])


def _holonomic_parts(p: Problem, c: CandidateCurve):
    if p.holonomic is None:
        raise ValueError("the problem has no holonomic constraint")
    dy = curve_derivatives(p, c)
    env = _environment(c, dy)
    raw = _el_residuals(p.lagrangian_partials, p.order, env, c.grid)
    grads = [sample(g, env, c.grid) for g in p.holonomic_partials]
    last = grads[-1]
    small = np.abs(last) < HOLONOMIC_GUARD
    if np.any(small):
        node = int(np.flatnonzero(small)[0])
        raise HypothesisViolation(
            f"dg/dy{p.n_vars} vanishes at node {node} (x = {c.grid.nodes[node]:.6g})", node
        )
    lam = raw[-1].values / last
    return env, raw, grads, lam


def holonomic_lambda(p: Problem, c: CandidateCurve) -> GridFunction:
    """Multiplier ``lambda(x)`` from the last variable's EL expression over ``dg/dy_n``."""
    _, _, _, lam = _holonomic_parts(p, c)
    return GridFunction(c.grid, lam)


@dataclass(frozen=True)
class HolonomicResult:
    multiplier: GridFunction
    residuals: list[GridFunction]
    #: ``max_i |g(x_i, y(x_i))|``
    constraint_defect: float


def holonomic_residual(p: Problem, c: CandidateCurve) -> HolonomicResult:
    """EL residuals of ``F = L - lambda(x) g``.

    The last residual vanishes by the definition of the multiplier and is
    returned as exact zeros.
    """
    env, raw, grads, lam = _holonomic_parts(p, c)
    residuals = [GridFunction(c.grid, r.values - lam * g) for r, g in zip(raw[:-1], grads[:-1])]
    residuals.append(GridFunction(c.grid, np.zeros(c.grid.n)))
    defect = float(np.max(np.abs(sample(p.holonomic, env, c.grid))))
    return HolonomicResult(GridFunction(c.grid, lam), residuals, defect)

# }}}


# {{{ report

@dataclass
class VariableReport:
    residual: GridFunction
    norm_max: float
    norm_l2: float
    nbc: EndpointCondition
    nbc_flags: dict[str, Optional[bool]]


@dataclass
class VerificationReport:
    tolerance: float
    variables: list[VariableReport]
    iso_lambda: Optional[np.ndarray] = None
    iso_defects: Optional[np.ndarray] = None
    holonomic_lambda: Optional[GridFunction] = None
    holonomic_defect: Optional[float] = None
    #: reasons why some quantity could not be computed
    notes: dict[str, str] = field(default_factory=dict)

    @property
    def satisfied(self) -> bool:
        tol = self.tolerance
        for var in self.variables:
            if not var.norm_max <= tol:
                return False
            if any(flag is False for flag in var.nbc_flags.values()):
                return False
        if self.iso_defects is not None and not np.all(self.iso_defects <= tol):
            return False
        if self.holonomic_defect is not None and not self.holonomic_defect <= tol:
            return False
        return not self.notes


def verify(
    p: Problem, c: CandidateCurve, tolerance: float = 1e-3, relative: bool = False
) -> VerificationReport:
    """Evaluate every applicable necessary condition along ``c``.

    With ``relative=True`` the tolerance is scaled by ``max |L|`` along the
    curve, which makes the flags invariant under positive scaling of ``L``.
    """
    _check_curve(p, c)
    notes: dict[str, str] = {}
    iso_lambda = iso_defects = hol_lambda = hol_defect = None
    F = p

    if p.isoperimetric:
        iso_defects = np.abs(constraint_values(p, c) - np.array([k.K for k in p.isoperimetric]))
        try:
            iso_lambda = estimate_lambda_iso(p, c)
            F = p.augmented(iso_lambda)
        except (DegenerateExtremalError, RankDeficiencyError) as exc:
            notes["iso.lambda"] = str(exc)
            F = p.augmented([0.0] * len(p.isoperimetric))

    if p.holonomic is not None and not p.isoperimetric:
        try:
            hol = holonomic_residual(p, c)
            residuals = hol.residuals
            hol_lambda = hol.multiplier
            hol_defect = hol.constraint_defect
        except HypothesisViolation as exc:
            notes["holonomic.lambda"] = str(exc)
            residuals = el_residual(p, c)
            env = _environment(c, curve_derivatives(p, c))
            hol_defect = float(np.max(np.abs(sample(p.holonomic, env, c.grid))))
    else:
        if p.holonomic is not None:
            notes["holonomic"] = "holonomic and isoperimetric constraints together are not supported"
        residuals = el_residual(F, c)

    scale = 1.0
    if relative:
        env = _environment(c, curve_derivatives(p, c))
        lmax = float(np.max(np.abs(sample(p.lagrangian, env, c.grid))))
        scale = lmax if lmax > 0 else 1.0
    tol = tolerance * scale

    out = []
    for r, nbc in zip(residuals, natural_bc(F, c)):
        out.append(
            VariableReport(
                r, fraccalc.trimmed_max(r), fraccalc.trimmed_l2(r), nbc, nbc.flags(tol)
            )
        )
    return VerificationReport(tol, out, iso_lambda, iso_defects, hol_lambda, hol_defect, notes)

# }}}


__all__ = [
    "BoundarySpec",
    "CandidateCurve",
    "DegenerateExtremalError",
    "EndpointCondition",
    "EvaluationError",
    "HolonomicResult",
    "HypothesisViolation",
    "IsoConstraint",
    "Problem",
    "RankDeficiencyError",
    "VariableReport",
    "VerificationReport",
    "constraint_residuals",
    "constraint_values",
    "curve_derivatives",
    "el_residual",
    "estimate_lambda_iso",
    "holonomic_lambda",
    "holonomic_residual",
    "iso_residual",
    "natural_bc",
    "verify",
]
