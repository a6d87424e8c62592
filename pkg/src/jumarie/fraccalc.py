r"""Jumarie's modified Riemann-Liouville calculus on uniform grids over :math:`[0, 1]`.

The two operators are

.. math::

    f^{(\alpha)}(x) = \frac{1}{\Gamma(1 - \alpha)} \frac{\mathrm{d}}{\mathrm{d}x}
        \int_0^x (x - t)^{-\alpha} (f(t) - f(0)) \,\mathrm{d}t,

    \int_0^x f(t) (\mathrm{d}t)^\alpha = \alpha \int_0^x (x - t)^{\alpha - 1} f(t) \,\mathrm{d}t.

Both weakly singular integrals are evaluated by product integration: the
smooth factor is interpolated piecewise-linearly and the kernel moments are
integrated exactly, so the weights depend only on the distance between nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Union

import numpy as np

#: Number of nodes excluded at each end by the trimmed norms.
TRIM = 2

# distances at or beyond this use the binomial series for the weights
_SERIES_START = 16


def gamma(x: float) -> float:
    """Gamma function for positive real arguments."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"gamma is only defined here for x > 0, got {x!r}")
    return math.gamma(x)


@dataclass(frozen=True)
class FracOrder:
    """Fractional order :math:`\\alpha` restricted to the open interval (0, 1)."""

    alpha: float

    def __post_init__(self) -> None:
        alpha = float(self.alpha)
        if not (0.0 < alpha < 1.0):
            raise ValueError(f"fractional order must lie in (0, 1), got {self.alpha!r}")
        object.__setattr__(self, "alpha", alpha)

    def __float__(self) -> float:
        return self.alpha


OrderLike = Union[FracOrder, float]


def as_order(order: OrderLike) -> FracOrder:
    return order if isinstance(order, FracOrder) else FracOrder(order)


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``n`` nodes on [0, 1]."""

    n: int

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 9:
            raise ValueError(f"grid needs an integer node count n >= 9, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return _nodes(self.n)

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        values = np.broadcast_to(np.asarray(func(self.nodes), dtype=float), (self.n,))
        return GridFunction(self, values)

    def constant(self, value: float) -> "GridFunction":
        return GridFunction(self, np.full(self.n, float(value)))


@lru_cache(maxsize=32)
def _nodes(n: int) -> np.ndarray:
    x = np.arange(n, dtype=float) / (n - 1)
    x[-1] = 1.0
    x.flags.writeable = False
    return x


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a continuous function at the nodes of a grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise ValueError(
                f"expected {self.grid.n} values for the grid, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f"grid function has a non-finite value at node {bad}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.grid.n

    def _other(self, other: GridFunction | float) -> np.ndarray | float:
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise ValueError("grid functions live on different grids")
            return other.values
        return float(other)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)


# {{{ product integration weights

def _binomials(p: float, count: int) -> list[float]:
    out = [1.0]
    for m in range(1, count + 1):
        out.append(out[-1] * (p - m + 1) / m)
    return out


@lru_cache(maxsize=64)
def product_weights(mu: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    r"""Weights for :math:`\int_0^{x_i} (x_i - t)^{\mu - 1} g(t) \,\mathrm{d}t`, :math:`0 < \mu \le 1`.

    With ``p = mu + 1`` and ``c = h**mu / (mu * p)`` the integral of the
    piecewise-linear interpolant of ``g`` is

    .. math::

        c \left( b_i g_0 + \sum_{j=1}^{i} a_{i-j} g_j \right),

    where ``a[0] = 1``, ``a[k] = (k+1)^p - 2k^p + (k-1)^p`` and
    ``b[i] = (i-1)^p - (i-1-mu) i^mu`` (``b[0] = 0``). Returns ``(a, b)`` as
    read-only arrays of length ``n``, excluding the factor ``c``.
    """
    if not (0.0 < mu <= 1.0):
        raise ValueError(f"kernel exponent must lie in (0, 1], got {mu!r}")
    p = mu + 1.0
    a = np.empty(n)
    b = np.zeros(n)
    a[0] = 1.0

    # the second differences cancel catastrophically for large k, so expand
    # (1 + 1/k)^p + (1 - 1/k)^p - 2 in even powers of 1/k instead
    head = min(n, _SERIES_START)
    k = np.arange(1, head, dtype=float)
    a[1:head] = (k + 1.0) ** p - 2.0 * k**p + (k - 1.0) ** p
    b[1:head] = (k - 1.0) ** p - (k - 1.0 - mu) * k**mu

    if n > _SERIES_START:
        binom = _binomials(p, 40)
        k = np.arange(_SERIES_START, n, dtype=float)
        u = 1.0 / k
        # sum_{m even >= 2} 2 binom(p, m) u^m, Horner in u^2
        even = np.zeros_like(k)
        for m in range(40, 0, -2):
            even = (even + 2.0 * binom[m]) * (u * u)
        a[_SERIES_START:] = k**p * even

        # sum_{m >= 2} binom(p, m) (-u)^m
        tail = np.zeros_like(k)
        for m in range(40, 1, -1):
            tail = (tail + binom[m] * (-1.0) ** m) * u
        b[_SERIES_START:] = k**p * tail * u

    a.flags.writeable = False
    b.flags.writeable = False
    return a, b


def _product_integral(values: np.ndarray, mu: float, h: float) -> np.ndarray:
    n = values.size
    a, b = product_weights(mu, n)
    # np.convolve sums directly (no FFT), so the summation order is fixed
    acc = np.convolve(values, a)[:n]
    if values[0] != 0.0:
        acc = acc + (b - a) * values[0]
    acc[0] = 0.0
    return (h**mu / (mu * (mu + 1.0))) * acc

# }}}


# {{{ operators

def jumarie_deriv(f: GridFunction, order: OrderLike) -> GridFunction:
    """Jumarie's modified Riemann-Liouville derivative of ``f`` at every node.

    The shifted function ``f - f(0)`` is integrated against
    :math:`(x - t)^{-\\alpha}` by product integration and the outer derivative
    uses second-order central differences in the interior and second-order
    one-sided differences at both ends.
    """
    alpha = as_order(order).alpha
    grid = f.grid
    h = grid.h
    shifted = f.values - f.values[0]
    inner = _product_integral(shifted, 1.0 - alpha, h)

    out = np.empty(grid.n)
    out[1:-1] = (inner[2:] - inner[:-2]) / (2.0 * h)
    out[0] = (-3.0 * inner[0] + 4.0 * inner[1] - inner[2]) / (2.0 * h)
    out[-1] = (3.0 * inner[-1] - 4.0 * inner[-2] + inner[-3]) / (2.0 * h)
    return GridFunction(grid, out / gamma(1.0 - alpha))


def integral_weights(grid: Grid, order: OrderLike, index: int | None = None) -> np.ndarray:
    """Weights ``w`` with ``frac_integral(f, order, index) == w @ f.values``."""
    alpha = as_order(order).alpha
    n = grid.n
    i = n - 1 if index is None else int(index)
    if not (0 <= i < n):
        raise IndexError(f"node index {index} outside grid of {n} nodes")
    w = np.zeros(n)
    if i == 0:
        return w
    a, b = product_weights(alpha, n)
    w[1 : i + 1] = a[i - 1 :: -1][:i]
    w[0] = b[i]
    return (grid.h**alpha / (alpha + 1.0)) * w


def frac_integral(f: GridFunction, order: OrderLike, index: int | None = None) -> float:
    r""":math:`\int_0^{x_i} f(t) (\mathrm{d}t)^\alpha` with ``x_i`` the node ``index`` (default: x = 1)."""
    return float(integral_weights(f.grid, order, index) @ f.values)


def frac_integral_cumulative(f: GridFunction, order: OrderLike) -> GridFunction:
    """The (dt)^alpha integral of ``f`` for every upper limit on the grid."""
    alpha = as_order(order).alpha
    return GridFunction(f.grid, alpha * _product_integral(f.values, alpha, f.grid.h))

# }}}


# {{{ norms

def trimmed(values: np.ndarray | GridFunction, trim: int = TRIM) -> np.ndarray:
    values = values.values if isinstance(values, GridFunction) else np.asarray(values)
    return values[trim : values.size - trim]


def trimmed_max(values: np.ndarray | GridFunction, trim: int = TRIM) -> float:
    return float(np.max(np.abs(trimmed(values, trim))))


def trimmed_l2(values: np.ndarray | GridFunction, grid: Grid | None = None, trim: int = TRIM) -> float:
    if grid is None:
        if not isinstance(values, GridFunction):
            raise TypeError("a grid is needed for the L2 norm of a plain array")
        grid = values.grid
    return float(np.sqrt(grid.h * np.sum(trimmed(values, trim) ** 2)))

# }}}


# {{{ identity diagnostics

def barrow_defect(f: GridFunction, order: OrderLike) -> float:
    """Max nodewise violation of the fractional Barrow formula for ``f``."""
    alpha = as_order(order).alpha
    lhs = frac_integral_cumulative(jumarie_deriv(f, alpha), alpha).values
    rhs = gamma(1.0 + alpha) * (f.values - f.values[0])
    return float(np.max(np.abs(lhs - rhs)))


def leibniz_defect(f: GridFunction, g: GridFunction, order: OrderLike) -> GridFunction:
    """``(fg)^(a) - (f^(a) g + f g^(a))`` at every node.

    This is measured, not assumed to vanish: with the integral definition of
    the derivative the product rule fails, e.g. for ``f = g = x**0.5``.
    """
    alpha = as_order(order).alpha
    fg = jumarie_deriv(f * g, alpha).values
    df = jumarie_deriv(f, alpha).values
    dg = jumarie_deriv(g, alpha).values
    return GridFunction(f.grid, fg - (df * g.values + f.values * dg))


def ibp_defect(u: GridFunction, v: GridFunction, order: OrderLike) -> float:
    """``|LHS - RHS|`` of the (dx)^alpha integration-by-parts formula on [0, 1]."""
    alpha = as_order(order).alpha
    du = jumarie_deriv(u, alpha)
    dv = jumarie_deriv(v, alpha)
    lhs = frac_integral(du * v, alpha)
    boundary = u.values[-1] * v.values[-1] - u.values[0] * v.values[0]
    rhs = gamma(1.0 + alpha) * boundary - frac_integral(u * dv, alpha)
    return abs(lhs - rhs)

# }}}


def power_coefficient(exponent: float, order: OrderLike) -> float:
    """Coefficient ``c`` in ``(x**e)^(alpha) = c * x**(e - alpha)``; zero for ``e = 0``."""
    alpha = as_order(order).alpha
    if exponent == 0.0:
        return 0.0
    return gamma(exponent + 1.0) / gamma(exponent + 1.0 - alpha)
