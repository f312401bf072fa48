"""Charts and exterior calculus in dimension two.

A :class:`Chart` is a rectangular coordinate domain with periodicity flags
and a sampling grid.  Forms carry :class:`~metriconn.expr.Expr`
coefficients: a 1-form is ``p dx + q dy``, a 2-form is ``r dx^dy``.

Pointwise verdicts elsewhere in the package ("skew everywhere", "trace zero
everywhere") are certified on grid samples only; the grid density is under
caller control through ``Chart.grid``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import Const, DomainError, Expr

__all__ = [
    "Chart", "ScalarField", "OneForm", "TwoForm",
    "d0", "d1", "wedge11", "integrate2", "line_integral",
    "evaluate_grid", "evaluate_grid_many", "sup_norm", "grid_derivative",
    "potential_on_grid", "generator_loop_integrals",
    "ZERO_ONE_FORM", "ZERO_TWO_FORM",
]


@dataclass(frozen=True)
class Chart:
    """Rectangular domain ``[x0,x1] x [y0,y1]`` with an ``nx x ny`` grid.

    Periodic axes are treated as half-open cells ``[x0, x1)`` so that the
    seam is never double-counted.
    """

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    periodic_x: bool = False
    periodic_y: bool = False
    grid: tuple[int, int] = (64, 64)

    def __post_init__(self):
        object.__setattr__(self, "x_range", (float(self.x_range[0]), float(self.x_range[1])))
        object.__setattr__(self, "y_range", (float(self.y_range[0]), float(self.y_range[1])))
        object.__setattr__(self, "grid", (int(self.grid[0]), int(self.grid[1])))
        if not self.x_range[0] < self.x_range[1]:
            raise ValueError(f"x_range must be increasing, got {self.x_range}")
        if not self.y_range[0] < self.y_range[1]:
            raise ValueError(f"y_range must be increasing, got {self.y_range}")
        if self.grid[0] < 8 or self.grid[1] < 8:
            raise ValueError(f"grid must be at least 8x8, got {self.grid}")

    @property
    def nx(self) -> int:
        return self.grid[0]

    @property
    def ny(self) -> int:
        return self.grid[1]

    @property
    def hx(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.nx

    @property
    def hy(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / self.ny

    @property
    def basepoint(self) -> tuple[float, float]:
        return (self.x_range[0], self.y_range[0])

    def xs(self, lattice: str = "mid") -> np.ndarray:
        x0 = self.x_range[0]
        if lattice == "mid":
            return x0 + (np.arange(self.nx) + 0.5) * self.hx
        if lattice == "node":
            return x0 + np.arange(self.nx) * self.hx
        raise ValueError(f"unknown lattice {lattice!r}")

    def ys(self, lattice: str = "mid") -> np.ndarray:
        y0 = self.y_range[0]
        if lattice == "mid":
            return y0 + (np.arange(self.ny) + 0.5) * self.hy
        if lattice == "node":
            return y0 + np.arange(self.ny) * self.hy
        raise ValueError(f"unknown lattice {lattice!r}")

    def mesh(self, lattice: str = "mid") -> tuple[np.ndarray, np.ndarray]:
        """Sample meshes with ``indexing='ij'``: entry ``[i, j]`` is ``(x_i, y_j)``."""
        return np.meshgrid(self.xs(lattice), self.ys(lattice), indexing="ij")

    def contains(self, x: float, y: float) -> bool:
        return (self.x_range[0] <= x <= self.x_range[1]
                and self.y_range[0] <= y <= self.y_range[1])

    def with_grid(self, nx: int, ny: int) -> "Chart":
        return Chart(self.x_range, self.y_range, self.periodic_x, self.periodic_y, (nx, ny))


@dataclass(frozen=True)
class ScalarField:
    coefficient: Expr


@dataclass(frozen=True)
class OneForm:
    """``p dx + q dy``."""

    p: Expr
    q: Expr

    def __add__(self, other: "OneForm") -> "OneForm":
        return OneForm(self.p + other.p, self.q + other.q)

    def __sub__(self, other: "OneForm") -> "OneForm":
        return OneForm(self.p - other.p, self.q - other.q)

    def __neg__(self) -> "OneForm":
        return OneForm(-self.p, -self.q)

    def scaled(self, factor) -> "OneForm":
        return OneForm(self.p * factor, self.q * factor)


@dataclass(frozen=True)
class TwoForm:
    """``r dx^dy``."""

    r: Expr

    def __add__(self, other: "TwoForm") -> "TwoForm":
        return TwoForm(self.r + other.r)

    def __sub__(self, other: "TwoForm") -> "TwoForm":
        return TwoForm(self.r - other.r)

    def __neg__(self) -> "TwoForm":
        return TwoForm(-self.r)

    def scaled(self, factor) -> "TwoForm":
        return TwoForm(self.r * factor)


ZERO_ONE_FORM = OneForm(Const(0.0), Const(0.0))
ZERO_TWO_FORM = TwoForm(Const(0.0))


# ---------------------------------------------------------------------------
# exterior derivative and wedge


def d0(f: ScalarField) -> OneForm:
    """Exterior derivative of a scalar field."""
    e = f.coefficient
    return OneForm(e.diff("x"), e.diff("y"))


def d1(a: OneForm) -> TwoForm:
    """Exterior derivative of a 1-form: ``(dq/dx - dp/dy) dx^dy``."""
    return TwoForm(a.q.diff("x") - a.p.diff("y"))


def wedge11(a: OneForm, b: OneForm) -> TwoForm:
    """Wedge of two 1-forms: ``(a.p b.q - a.q b.p) dx^dy``."""
    return TwoForm(a.p * b.q - a.q * b.p)


# ---------------------------------------------------------------------------
# grid evaluation


def _evaluate_on(expr: Expr, xmesh: np.ndarray, ymesh: np.ndarray, memo=None) -> np.ndarray:
    """Evaluate on explicit meshes; locate and raise a DomainError if any
    sample is outside the expression's domain."""
    with np.errstate(all="ignore"):
        raw = expr.eval_grid(xmesh, ymesh, memo)
    arr = np.broadcast_to(np.asarray(raw, dtype=float), xmesh.shape)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        idx = tuple(bad)
        expr.eval(float(xmesh[idx]), float(ymesh[idx]))
        raise DomainError(float(xmesh[idx]), float(ymesh[idx]), expr, "non-finite value")
    return arr


def evaluate_grid(expr: Expr, chart: Chart, lattice: str = "mid") -> np.ndarray:
    """Evaluate an expression on the chart's sample grid (shape ``nx x ny``)."""
    xmesh, ymesh = chart.mesh(lattice)
    return _evaluate_on(expr, xmesh, ymesh)


def evaluate_grid_many(exprs, chart: Chart, lattice: str = "mid") -> list[np.ndarray]:
    """Evaluate several expressions on one grid with shared subtree caching."""
    xmesh, ymesh = chart.mesh(lattice)
    memo: dict = {}
    return [_evaluate_on(e, xmesh, ymesh, memo) for e in exprs]


def _flatten_exprs(obj) -> list[Expr]:
    if isinstance(obj, Expr):
        return [obj]
    if isinstance(obj, ScalarField):
        return [obj.coefficient]
    if isinstance(obj, OneForm):
        return [obj.p, obj.q]
    if isinstance(obj, TwoForm):
        return [obj.r]
    out: list[Expr] = []
    for item in obj:
        out.extend(_flatten_exprs(item))
    return out


def sup_norm(obj, chart: Chart) -> float:
    """Max absolute value over the sample grid of an expression, a form, or
    any nesting of them."""
    exprs = _flatten_exprs(obj)
    if not exprs:
        return 0.0
    arrays = evaluate_grid_many(exprs, chart)
    return float(max(np.max(np.abs(a)) for a in arrays))


# ---------------------------------------------------------------------------
# quadrature

_GAUSS2 = 0.5 / math.sqrt(3.0)


def _axis_rule(x0: float, h: float, n: int, periodic: bool) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and weights along one axis.

    Periodic axes use the composite midpoint rule (spectrally accurate for
    smooth periodic integrands over the half-open cell).  Non-periodic axes
    use two-point Gauss-Legendre per cell, which is fourth order.
    """
    mids = x0 + (np.arange(n) + 0.5) * h
    if periodic:
        return mids, np.full(n, h)
    nodes = np.empty(2 * n)
    nodes[0::2] = mids - _GAUSS2 * h
    nodes[1::2] = mids + _GAUSS2 * h
    return nodes, np.full(2 * n, h / 2.0)


def integrate2(w: TwoForm, chart: Chart) -> float:
    """Integrate a 2-form over the chart.

    Weights are applied with a dot-product reduction (pairwise summation),
    so the result is deterministic for a given grid.
    """
    xq, wx = _axis_rule(chart.x_range[0], chart.hx, chart.nx, chart.periodic_x)
    yq, wy = _axis_rule(chart.y_range[0], chart.hy, chart.ny, chart.periodic_y)
    xmesh, ymesh = np.meshgrid(xq, yq, indexing="ij")
    values = _evaluate_on(w.r, xmesh, ymesh)
    return float(wx @ values @ wy)


def line_integral(a: OneForm, vertices, panels: int = 128) -> float:
    """Integrate a 1-form along an axis-aligned polyline.

    Each segment uses composite Simpson quadrature with ``panels``
    subintervals, which is exact for polynomial coefficients of degree <= 3.
    """
    pts = [(float(px), float(py)) for (px, py) in vertices]
    if len(pts) < 2:
        raise ValueError("a polyline needs at least two vertices")
    if panels % 2:
        panels += 1
    weights = np.full(panels + 1, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    total = 0.0
    for (xa, ya), (xb, yb) in zip(pts, pts[1:]):
        if xa != xb and ya != yb:
            raise ValueError(f"segment ({xa},{ya})-({xb},{yb}) is not axis-aligned")
        if xa == xb and ya == yb:
            continue
        if ya == yb:  # horizontal: integrate p dx
            ts = np.linspace(xa, xb, panels + 1)
            values = _evaluate_on(a.p, ts, np.full(panels + 1, ya))
            h = (xb - xa) / panels
        else:  # vertical: integrate q dy
            ts = np.linspace(ya, yb, panels + 1)
            values = _evaluate_on(a.q, np.full(panels + 1, xa), ts)
            h = (yb - ya) / panels
        total += float(weights @ values) * h / 3.0
    return total


# ---------------------------------------------------------------------------
# potentials of closed 1-forms

_GL4_NODES, _GL4_WEIGHTS = np.polynomial.legendre.leggauss(4)


def _cumulative_line_integral(expr: Expr, nodes: np.ndarray, other: np.ndarray,
                              along_x: bool) -> np.ndarray:
    """Cumulative integral of an expression along gridlines.

    ``nodes`` are the integration coordinates; ``other`` the fixed
    coordinate of each line.  Returns shape ``(len(other), len(nodes))``
    with zeros in column 0; four-point Gauss-Legendre per node interval.
    """
    h = nodes[1] - nodes[0]
    mid = (nodes[:-1] + nodes[1:]) / 2.0
    ts = (mid[:, None] + (h / 2.0) * _GL4_NODES[None, :]).ravel()
    if along_x:
        xmesh = np.broadcast_to(ts[None, :], (len(other), ts.size))
        ymesh = np.broadcast_to(other[:, None], xmesh.shape)
    else:
        ymesh = np.broadcast_to(ts[None, :], (len(other), ts.size))
        xmesh = np.broadcast_to(other[:, None], ymesh.shape)
    values = _evaluate_on(expr, xmesh, ymesh)
    per_interval = values.reshape(len(other), len(mid), 4) @ _GL4_WEIGHTS * (h / 2.0)
    out = np.zeros((len(other), len(nodes)))
    np.cumsum(per_interval, axis=1, out=out[:, 1:])
    return out


def potential_on_grid(a: OneForm, chart: Chart, basepoint=None) -> np.ndarray:
    """Integrate a 1-form from the basepoint along the x-gridline and then
    up y-gridlines, sampled on the node lattice (zero at the basepoint).

    The result is a potential of the form only where the form is closed;
    the caller owns that check.
    """
    xs = chart.xs("node")
    ys = chart.ys("node")
    x0, y0 = chart.basepoint
    base_row = _cumulative_line_integral(a.p, xs, np.array([y0]), True)[0]
    columns = _cumulative_line_integral(a.q, ys, xs, False)
    samples = base_row[:, None] + columns
    if basepoint is not None and tuple(basepoint) != (x0, y0):
        xb, yb = float(basepoint[0]), float(basepoint[1])
        offset = line_integral(a, [(x0, y0), (xb, y0), (xb, yb)],
                               panels=4 * max(chart.nx, chart.ny))
        samples = samples - offset
    return samples


def generator_loop_integrals(a: OneForm, chart: Chart) -> tuple[float, float]:
    """Loop integrals of a 1-form around the periodic generators through the
    basepoint (zero on non-periodic axes).  A nonzero loop integral of a
    closed form obstructs any single-valued potential on the chart."""
    x0, y0 = chart.basepoint
    defect_x = defect_y = 0.0
    if chart.periodic_x:
        defect_x = line_integral(a, [(x0, y0), (chart.x_range[1], y0)],
                                 panels=4 * chart.nx)
    if chart.periodic_y:
        defect_y = line_integral(a, [(x0, y0), (x0, chart.y_range[1])],
                                 panels=4 * chart.ny)
    return (defect_x, defect_y)


# ---------------------------------------------------------------------------
# finite differences on sampled fields

_CENTRAL7 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0


def _onesided_weights(position: int) -> np.ndarray:
    # first-derivative weights on the 7 nodes 0..6, evaluated at `position`
    offsets = np.arange(7.0) - position
    van = np.vander(offsets, increasing=True).T
    rhs = np.zeros(7)
    rhs[1] = 1.0
    return np.linalg.solve(van, rhs)


def grid_derivative(values: np.ndarray, h: float, axis: int, periodic: bool) -> np.ndarray:
    """Sixth-order finite-difference first derivative of a sampled field.

    Periodic axes wrap; non-periodic axes switch to one-sided stencils of
    the same order near the edges.  ``values`` may have trailing dimensions
    (for example sampled matrix fields).
    """
    field = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = field.shape[0]
    if n < 7:
        raise ValueError("need at least 7 samples along the axis")
    out = np.zeros_like(field)
    if periodic:
        for k, c in enumerate(_CENTRAL7):
            if c != 0.0:
                out += c * np.roll(field, 3 - k, axis=0)
    else:
        for k, c in enumerate(_CENTRAL7):
            if c != 0.0:
                out[3:n - 3] += c * field[k:n - 6 + k]
        for pos in range(3):
            w_lo = _onesided_weights(pos)
            w_hi = _onesided_weights(6 - pos)
            out[pos] = np.tensordot(w_lo, field[:7], axes=(0, 0))
            out[n - 1 - pos] = np.tensordot(w_hi, field[n - 7:], axes=(0, 0))
    return np.moveaxis(out / h, 0, axis)
