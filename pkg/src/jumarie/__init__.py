"""Jumarie's modified Riemann-Liouville calculus and fractional variational problems.

Modules
-------
- :mod:`jumarie.fraccalc` - derivative, (dx)^alpha integral and identity diagnostics
- :mod:`jumarie.lagrangian` - expression parsing, evaluation and symbolic partials
- :mod:`jumarie.variational` - Euler-Lagrange, natural boundary, isoperimetric and
  holonomic conditions along candidate curves
- :mod:`jumarie.ritz` - direct minimization over fractional power bases
- :mod:`jumarie.cli` - the ``jumarie`` command
"""

from jumarie.fraccalc import (
    FracOrder,
    Grid,
    GridFunction,
    barrow_defect,
    frac_integral,
    frac_integral_cumulative,
    gamma,
    ibp_defect,
    jumarie_deriv,
    leibniz_defect,
)
from jumarie.lagrangian import diff, evaluate, parse
from jumarie.ritz import FracBasis, SolverConfig, SolverResult, solve
from jumarie.variational import (
    BoundarySpec,
    CandidateCurve,
    IsoConstraint,
    Problem,
    VerificationReport,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec",
    "CandidateCurve",
    "FracBasis",
    "FracOrder",
    "Grid",
    "GridFunction",
    "IsoConstraint",
    "Problem",
    "SolverConfig",
    "SolverResult",
    "VerificationReport",
    "barrow_defect",
    "diff",
    "evaluate",
    "frac_integral",
    "frac_integral_cumulative",
    "gamma",
    "ibp_defect",
    "jumarie_deriv",
    "leibniz_defect",
    "parse",
    "solve",
    "verify",
]
