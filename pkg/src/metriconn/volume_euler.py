"""Volume-form criterion and Euler-form integrals.

A connection preserves a local volume form exactly when the trace of its
curvature vanishes; the volume factor then solves ``d(log f) = tr theta``,
which is integrated along gridlines from the basepoint.  On periodic charts
the loop integrals of ``tr theta`` around the generators are reported: a
nonzero loop defect obstructs any global volume form (and hence any global
parallel metric).

For a connection with a chart-global compatible metric, the curvature in an
orthonormalized frame is skew and its off-diagonal entry divided by ``2 pi``
is the Euler 2-form; its integral is the Euler number used to compare
metric-equivalent connections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import Const, sqrt as expr_sqrt
from .forms import (
    Chart,
    TwoForm,
    evaluate_grid_many,
    generator_loop_integrals,
    grid_derivative,
    integrate2,
    potential_on_grid,
    sup_norm,
)
from .connection import (
    ConnectionMatrix,
    FrameChange,
    MetricField,
    compatibility_residual,
    curvature,
    gauge_transform,
    trace_connection,
    trace_curvature,
)
from .metrizability import DEFAULT_TOLERANCES, Tolerances

__all__ = [
    "VolumeReport", "EulerReport", "NotCompatible",
    "volume_criterion", "euler_form", "compare_euler",
]


class NotCompatible(ValueError):
    def __init__(self, label: str, residual: float, tolerance: float):
        super().__init__(
            f"{label} is not compatible with the metric: residual {residual:.3g} "
            f"exceeds tolerance {tolerance:.3g}")
        self.label = label
        self.residual = residual
        self.tolerance = tolerance


@dataclass(frozen=True)
class VolumeReport:
    """Outcome of the parallel-volume-form test.

    ``log_f`` is the node-lattice sample of the solution of
    ``d(log f) = tr theta`` when the trace curvature vanishes (``closed``),
    with ``log_f = 0`` at the basepoint.  ``period_defects`` holds the loop
    integrals of ``tr theta`` around the x- and y-generators (zero on
    non-periodic axes).
    """

    chart: Chart
    trace_curvature_max: float
    closed: bool
    log_f: np.ndarray | None
    period_defects: tuple[float, float]
    reconstruction_residual: float | None
    threshold: float


def volume_criterion(theta: ConnectionMatrix, *,
                     tolerances: Tolerances = DEFAULT_TOLERANCES,
                     basepoint=None) -> VolumeReport:
    """Test whether the connection preserves a local volume form and, when it
    does, integrate ``tr theta`` from the basepoint to produce ``log f``."""
    chart = theta.chart
    tr_theta = trace_connection(theta)
    tr_omega = trace_curvature(curvature(theta))
    [tr_curv] = evaluate_grid_many([tr_omega.r], chart)
    trace_max = float(np.max(np.abs(tr_curv)))
    scale = 1.0 + sup_norm(tr_theta, chart)
    threshold = tolerances.flat * scale
    closed = trace_max <= threshold
    defects = generator_loop_integrals(tr_theta, chart)

    log_f = None
    residual = None
    if closed:
        log_f = potential_on_grid(tr_theta, chart, basepoint)
        [p_vals, q_vals] = evaluate_grid_many([tr_theta.p, tr_theta.q], chart, "node")
        res_x = grid_derivative(log_f, chart.hx, 0, periodic=False) - p_vals
        res_y = grid_derivative(log_f, chart.hy, 1, periodic=False) - q_vals
        residual = float(max(np.max(np.abs(res_x)), np.max(np.abs(res_y))))

    return VolumeReport(chart, trace_max, closed, log_f, defects,
                        residual, threshold)


@dataclass(frozen=True)
class EulerReport:
    """Euler 2-form of a metric connection in an orthonormalized frame, its
    integral over the chart, and the frame used."""

    euler_form: TwoForm
    euler_number: float
    frame_used: FrameChange
    skew_residual: float


def _require_compatible(theta: ConnectionMatrix, metric: MetricField, label: str,
                        tolerances: Tolerances) -> None:
    chart = theta.chart
    residual = compatibility_residual(theta, metric)
    value = sup_norm(residual, chart)
    tol = (tolerances.compat
           * (1.0 + sup_norm(metric.entries, chart))
           * (1.0 + theta.sup()))
    if value > tol:
        raise NotCompatible(label, value, tol)


def _orthonormal_frame(metric: MetricField, chart: Chart) -> FrameChange:
    """Frame change making the metric the identity: the inverse transpose of
    the lower-triangular square root of ``G`` (closed 2x2 form)."""
    (g11, g12), (_, g22) = metric.entries
    l11 = expr_sqrt(g11)
    l21 = g12 / l11
    l22 = expr_sqrt(g22 - l21 * l21)
    inv_l11 = Const(1.0) / l11
    inv_l22 = Const(1.0) / l22
    upper = (-(l21) / (l11 * l22))
    return FrameChange(((inv_l11, upper), (Const(0.0), inv_l22)), chart)


def euler_form(theta: ConnectionMatrix, metric: MetricField, *,
               tolerances: Tolerances = DEFAULT_TOLERANCES,
               label: str = "connection") -> EulerReport:
    """Euler form and Euler number of a connection compatible with ``metric``.

    Raises :class:`NotCompatible` when the compatibility residual exceeds
    its tolerance, and :class:`ValueError` if the metric is not positive
    definite on the grid.
    """
    chart = theta.chart
    witness = metric.spd_witness(chart)
    if witness is not None:
        raise ValueError(f"metric is not positive definite near {witness}")
    _require_compatible(theta, metric, label, tolerances)

    frame = _orthonormal_frame(metric, chart)
    theta_prime = gauge_transform(theta, frame)
    sym = []
    for i in range(2):
        for j in range(i, 2):
            form = theta_prime.entries[i][j] + theta_prime.entries[j][i]
            sym.extend([form.p, form.q])
    skew_residual = float(max(np.max(np.abs(a)) for a in evaluate_grid_many(sym, chart)))
    omega_prime = curvature(theta_prime)
    form = TwoForm(omega_prime.entries[0][1].r * Const(1.0 / (2.0 * math.pi)))
    number = integrate2(form, chart)
    return EulerReport(form, number, frame, skew_residual)


def compare_euler(theta1: ConnectionMatrix, theta2: ConnectionMatrix,
                  metric: MetricField, *,
                  tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Absolute difference of the Euler numbers of two connections sharing a
    chart-global compatible metric."""
    if theta1.chart != theta2.chart:
        raise ValueError("connections must share a chart to be compared")
    first = euler_form(theta1, metric, tolerances=tolerances, label="first connection")
    second = euler_form(theta2, metric, tolerances=tolerances, label="second connection")
    return abs(first.euler_number - second.euler_number)
