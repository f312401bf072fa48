"""Local metrizability of rank-2 connections over a surface chart.

The decision pipeline: compute the curvature matrix; handle the flat case
through a parallel frame; otherwise factor the volume form out of the
curvature, test pointwise for purely imaginary eigenvalues of the
coefficient matrix, build the closed-form symmetric positive solution of
the 2x2 twisted Lyapunov equation ``U S + S U^T = 0``, take its square
root, and test the connection matrix in the transformed frame.

The symmetrizer is normalized to determinant one, which fixes its scale
ambiguity but leaves the transformed connection matrix skew only up to a
multiple of the identity (rescaling a frame by a scalar field shifts its
connection matrix by d(log scale) times the identity).  The decision
therefore tests the off-diagonal antisymmetry and the equality of the
diagonal entries; the leftover identity component is the closed trace
form, whose potential supplies a conformal factor on the recovered
metric.  A positive verdict comes with that metric, independently
validated against the compatibility residual.

All pointwise verdicts are certified on grid samples only; the grid and
every tolerance used are recorded in the report.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .expr import Const, sqrt as expr_sqrt
from .forms import (
    Chart,
    OneForm,
    TwoForm,
    evaluate_grid_many,
    generator_loop_integrals,
    potential_on_grid,
    sup_norm,
)
from .connection import (
    ConnectionMatrix,
    CurvatureMatrix,
    FrameChange,
    MetricField,
    compatibility_residual,
    curvature,
    gauge_transform,
    parallel_frame_flat,
    residual_sup,
    trace_connection,
)

__all__ = [
    "Verdict", "Tolerances", "CurvatureCoefficient", "EigenTest",
    "MetrizabilityReport",
    "DegenerateVolume", "EigenPreconditionFailed", "NotSPD",
    "factor_curvature", "imaginary_eigenvalue_test", "skew_symmetrizer",
    "spd_sqrt", "recover_metric", "check_metrizability",
    "symplectic_identity_residual", "transition_orthogonality",
    "DEFAULT_TOLERANCES",
]


class Verdict(enum.Enum):
    METRIC = "Metric"
    FLAT = "Flat"
    NOT_METRIC_EIGEN = "NotMetricEigen"
    NOT_METRIC_SKEW = "NotMetricSkew"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Tolerances:
    """Baseline tolerances; the scaled variants actually applied are echoed
    in every report."""

    flat: float = 1e-9          # scaled by 1 + sup|theta|
    eigen_trace: float = 1e-8   # scaled pointwise by max|U|
    eigen_det: float = 1e-10    # scaled pointwise by max|U|^2
    skew: float = 1e-8          # scaled by 1 + sup|theta'|
    compat: float = 1e-8        # scaled by metric/connection magnitudes
    kernel: float = 1e-10       # matrix-kernel residuals

    def scaled(self, factor: float) -> "Tolerances":
        f = float(factor)
        return Tolerances(self.flat * f, self.eigen_trace * f, self.eigen_det * f,
                          self.skew * f, self.compat * f, self.kernel * f)


DEFAULT_TOLERANCES = Tolerances()


class DegenerateVolume(ValueError):
    def __init__(self, point, value):
        super().__init__(f"volume form vanishes near {point} (value {value:.3g})")
        self.point = point
        self.value = value


class EigenPreconditionFailed(ValueError):
    def __init__(self, point, trace, det):
        super().__init__(
            f"eigenvalue precondition fails at {point}: trace {trace:.3g}, det {det:.3g}")
        self.point = point
        self.trace = trace
        self.det = det


class NotSPD(ValueError):
    def __init__(self, point, detail=""):
        message = f"matrix is not symmetric positive definite at {point}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class CurvatureCoefficient:
    """Curvature factored through a volume form: ``Omega = volume * matrix``."""

    matrix: tuple
    volume: TwoForm


class EigenTest:
    """Outcome of the purely-imaginary-eigenvalue test at one point.

    For a real 2x2 matrix, both eigenvalues are purely imaginary and nonzero
    exactly when the trace vanishes and the determinant is positive; the
    raw margins are kept for diagnostics.
    """

    __slots__ = ("ok", "trace", "det", "scale")

    def __init__(self, ok: bool, trace: float, det: float, scale: float):
        self.ok = bool(ok)
        self.trace = float(trace)
        self.det = float(det)
        self.scale = float(scale)

    def __bool__(self):
        return self.ok

    def __repr__(self):
        return f"EigenTest(ok={self.ok}, trace={self.trace:.3g}, det={self.det:.3g})"


@dataclass(frozen=True)
class MetrizabilityReport:
    """Decision outcome with witnesses, residual diagnostics, and the
    recovered metric.

    For a ``Metric`` verdict the parallel metric in the original frame is
    ``exp(conformal_log) * metric`` pointwise; ``conformal_log`` is ``None``
    when the connection trace vanishes on the grid, in which case ``metric``
    alone is the (closed-form) parallel metric.  Nonzero
    ``conformal_defects`` on a periodic chart mean the metric is local only:
    it does not close up around the corresponding generator.
    """

    verdict: Verdict
    chart: Chart
    witness: tuple[float, float] | None = None
    metric: MetricField | None = None
    metric_samples: np.ndarray | None = None
    conformal_log: np.ndarray | None = None
    conformal_defects: tuple[float, float] | None = None
    max_skew_residual: float | None = None
    min_det_u: float | None = None
    max_abs_trace_u: float | None = None
    curvature_zero_fraction: float = 0.0
    compat_residual: float | None = None
    frame_residual: float | None = None
    loop_defect: float | None = None
    tolerances: dict = field(default_factory=dict)
    normalization: str = "det(S) = 1"
    notes: tuple = ("pointwise verdicts are certified on grid samples only",)

    @property
    def grid(self) -> tuple[int, int]:
        return self.chart.grid

    def is_locally_metric(self) -> bool:
        return self.verdict in (Verdict.METRIC, Verdict.FLAT)

    def metric_grid(self) -> np.ndarray | None:
        """Sampled parallel metric on the node lattice, conformal factor
        included."""
        if self.metric_samples is not None:
            return self.metric_samples
        if self.metric is None:
            return None
        entries = evaluate_grid_many(
            [self.metric.entries[i][j] for i in range(2) for j in range(2)],
            self.chart, "node")
        stacked = np.stack(
            [np.stack(entries[:2], -1), np.stack(entries[2:], -1)], -2)
        if self.conformal_log is not None:
            stacked = np.exp(self.conformal_log)[:, :, None, None] * stacked
        return stacked


def _first_point(chart: Chart, mask: np.ndarray) -> tuple[float, float]:
    i, j = np.argwhere(mask)[0]
    return (float(chart.xs()[i]), float(chart.ys()[j]))


# ---------------------------------------------------------------------------
# pipeline stages


def factor_curvature(omega: CurvatureMatrix, volume: TwoForm) -> CurvatureCoefficient:
    """Factor a (nonvanishing) volume form out of the curvature matrix.

    Raises :class:`DegenerateVolume` if the volume coefficient vanishes at a
    grid point.  The reconstruction ``volume * matrix = Omega`` is verified
    on the grid.
    """
    chart = omega.chart
    [vol] = evaluate_grid_many([volume.r], chart)
    vol_scale = float(np.max(np.abs(vol)))
    degenerate = np.abs(vol) <= 1e-12 * (1.0 + vol_scale)
    if degenerate.any():
        point = _first_point(chart, degenerate)
        i, j = np.argwhere(degenerate)[0]
        raise DegenerateVolume(point, float(vol[i, j]))

    matrix = tuple(
        tuple(entry.r / volume.r for entry in row) for row in omega.entries
    )
    rebuilt = [u * volume.r for row in matrix for u in row]
    originals = [entry.r for row in omega.entries for entry in row]
    arrays = evaluate_grid_many(list(rebuilt) + list(originals), chart)
    half = len(rebuilt)
    scale = 1.0 + max(float(np.max(np.abs(a))) for a in arrays[half:])
    worst = max(
        float(np.max(np.abs(a - b))) for a, b in zip(arrays[:half], arrays[half:])
    )
    if worst > 1e-12 * scale:
        raise ArithmeticError(f"volume factoring failed to reconstruct: {worst:.3g}")
    return CurvatureCoefficient(matrix, volume)


def imaginary_eigenvalue_test(u, tolerances: Tolerances = DEFAULT_TOLERANCES) -> EigenTest:
    """Test whether a real 2x2 matrix has purely imaginary nonzero
    eigenvalues, with scale-relative margins."""
    m = np.asarray(u, dtype=float)
    scale = float(np.max(np.abs(m)))
    trace = float(m[0, 0] + m[1, 1])
    det = float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    ok = (scale > 0.0
          and abs(trace) <= tolerances.eigen_trace * scale
          and det >= tolerances.eigen_det * scale * scale)
    return EigenTest(ok, trace, det, scale)


def _eigen_arrays(matrix, chart: Chart):
    u11, u12, u21, u22 = evaluate_grid_many(
        [matrix[0][0], matrix[0][1], matrix[1][0], matrix[1][1]], chart)
    scale = np.maximum.reduce([np.abs(u11), np.abs(u12), np.abs(u21), np.abs(u22)])
    trace = u11 + u22
    det = u11 * u22 - u12 * u21
    return trace, det, scale


def skew_symmetrizer(matrix, chart: Chart,
                     tolerances: Tolerances = DEFAULT_TOLERANCES):
    """Symmetric positive-definite solution ``S`` of ``U S + S U^T = 0`` with
    ``det S = 1``, as a 2x2 matrix of expressions.

    Writing the traceless part of ``U`` as ``[[a, b], [c, -a]]`` with
    ``det = -(a^2 + b c) > 0``, the solution is

        S = [[b^2, -a b], [-a b, -c b]] / sqrt(b^2 * det)

    The ``sqrt(b^2)`` factor realizes ``|b|`` inside the expression grammar,
    so the sign of ``b`` is resolved pointwise; ``b`` cannot vanish where
    the eigenvalue test holds, since ``b = 0`` forces ``det <= 0``.

    Raises :class:`EigenPreconditionFailed` if the eigenvalue test fails at
    a grid point.
    """
    trace, det, scale = _eigen_arrays(matrix, chart)
    bad = ~((scale > 0.0)
            & (np.abs(trace) <= tolerances.eigen_trace * scale)
            & (det >= tolerances.eigen_det * scale * scale))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise EigenPreconditionFailed(
            _first_point(chart, bad), float(trace[i, j]), float(det[i, j]))

    a = (matrix[0][0] - matrix[1][1]) * Const(0.5)
    b = matrix[0][1]
    c = matrix[1][0]
    disc = -(a * a + b * c)
    root = expr_sqrt((b * b) * disc)
    s11 = (b * b) / root
    s12 = (-(a * b)) / root
    s22 = (-(c * b)) / root
    return ((s11, s12), (s12, s22))


def spd_sqrt(s, chart: Chart):
    """Symmetric positive-definite square root of a det-1 SPD matrix of
    expressions, via the 2x2 closed form ``A = (S + I) / sqrt(tr S + 2)``.

    Raises :class:`NotSPD` if ``S`` is not SPD with unit determinant on the
    grid.
    """
    s11, s12, s21, s22 = s[0][0], s[0][1], s[1][0], s[1][1]
    a11, a12, a22 = evaluate_grid_many([s11, s12, s22], chart)
    det = a11 * a22 - a12 * a12
    bad = (a11 <= 0.0) | (det <= 0.0)
    if bad.any():
        raise NotSPD(_first_point(chart, bad), "non-positive leading minor")
    off = np.abs(det - 1.0) > 1e-8 * (1.0 + np.abs(det))
    if off.any():
        i, j = np.argwhere(off)[0]
        raise NotSPD(_first_point(chart, off), f"det = {det[i, j]:.6g} != 1")

    denom = expr_sqrt(s11 + s22 + Const(2.0))
    q11 = (s11 + Const(1.0)) / denom
    q12 = s12 / denom
    q21 = s21 / denom if s21 is not s12 else q12
    q22 = (s22 + Const(1.0)) / denom
    return ((q11, q12), (q21, q22))


def recover_metric(s) -> MetricField:
    """Metric making the transformed frame orthonormal, expressed in the
    original frame: the adjugate of the det-1 symmetrizer."""
    return MetricField.symmetric(s[1][1], -s[0][1], s[0][0])


# ---------------------------------------------------------------------------
# matrix kernels (pointwise, numeric)

_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def symplectic_identity_residual(x) -> float:
    """Residual of the det-1 identity ``X J X^-1 = X X^T J`` in the max norm."""
    m = np.asarray(x, dtype=float)
    det = float(np.linalg.det(m))
    if abs(det - 1.0) > 1e-12:
        raise ValueError(f"matrix must have determinant 1, got {det!r}")
    lhs = m @ _J @ np.linalg.inv(m)
    rhs = m @ m.T @ _J
    return float(np.max(np.abs(lhs - rhs)))


def _skewness(m: np.ndarray) -> float:
    return float(np.max(np.abs(m + m.T)))


def transition_orthogonality(a, b, u) -> float:
    """Distance of ``A^-1 B`` from the orthogonal group, for two det-1
    conjugators that both take ``U`` to a skew matrix.

    Raises ``ValueError`` when the preconditions (unit determinants,
    skewness of both conjugates) do not hold.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    u = np.asarray(u, dtype=float)
    for name, m in (("A", a), ("B", b)):
        det = float(np.linalg.det(m))
        if abs(det - 1.0) > 1e-9:
            raise ValueError(f"det {name} = {det!r}, expected 1")
    scale = float(np.max(np.abs(u))) + 1.0
    for name, m in (("A", a), ("B", b)):
        skew = _skewness(np.linalg.inv(m) @ u @ m)
        if skew > 1e-10 * scale:
            raise ValueError(f"{name}^-1 U {name} is not skew (residual {skew:.3g})")
    s = np.linalg.inv(a) @ b
    return float(np.max(np.abs(s @ s.T - np.eye(2))))


# ---------------------------------------------------------------------------
# orchestration


def check_metrizability(theta: ConnectionMatrix, chart: Chart | None = None, *,
                        tolerances: Tolerances = DEFAULT_TOLERANCES,
                        basepoint=None) -> MetrizabilityReport:
    """Decide whether a rank-2 connection is locally metric on the chart.

    Returns a report whose verdict is one of ``Metric`` (with the recovered
    metric), ``Flat`` (with a sampled parallel metric and loop defects),
    ``NotMetricEigen`` / ``NotMetricSkew`` (with a witness point), or
    ``Inconclusive`` (the sampled curvature-zero set is a proper nonempty
    subset of the grid, where the pointwise construction does not apply).
    """
    if chart is not None and chart != theta.chart:
        theta = ConnectionMatrix(theta.entries, chart)
    chart = theta.chart
    if theta.m != 2:
        raise ValueError("metrizability decision is implemented for rank-2 bundles")

    theta_sup = theta.sup()
    flat_tol = tolerances.flat * (1.0 + theta_sup)
    tol_echo = {
        "flat": flat_tol,
        "eigen_trace": tolerances.eigen_trace,
        "eigen_det": tolerances.eigen_det,
        "skew_base": tolerances.skew,
        "compat_base": tolerances.compat,
    }

    omega = curvature(theta)
    mags = [np.abs(arr) for arr in evaluate_grid_many(
        [f.r for row in omega.entries for f in row], chart)]
    peak = np.maximum.reduce(mags)
    zero_mask = peak <= flat_tol
    zero_fraction = float(np.mean(zero_mask))

    if zero_fraction == 1.0:
        frame = parallel_frame_flat(theta, basepoint)
        return MetrizabilityReport(
            verdict=Verdict.FLAT,
            chart=chart,
            metric_samples=frame.metric_samples(),
            curvature_zero_fraction=1.0,
            frame_residual=frame.residual_max,
            loop_defect=frame.loop_defect(),
            tolerances=tol_echo,
        )

    if zero_fraction > 0.0:
        return MetrizabilityReport(
            verdict=Verdict.INCONCLUSIVE,
            chart=chart,
            witness=_first_point(chart, zero_mask),
            curvature_zero_fraction=zero_fraction,
            tolerances=tol_echo,
            notes=MetrizabilityReport.notes
            + ("curvature vanishes on a proper subset of the sampled grid; "
               "the pointwise construction does not apply there",),
        )

    coeff = factor_curvature(omega, TwoForm(Const(1.0)))
    trace, det, scale = _eigen_arrays(coeff.matrix, chart)
    ok = ((scale > 0.0)
          & (np.abs(trace) <= tolerances.eigen_trace * scale)
          & (det >= tolerances.eigen_det * scale * scale))
    min_det = float(np.min(det))
    max_tr = float(np.max(np.abs(trace)))
    if not ok.all():
        return MetrizabilityReport(
            verdict=Verdict.NOT_METRIC_EIGEN,
            chart=chart,
            witness=_first_point(chart, ~ok),
            min_det_u=min_det,
            max_abs_trace_u=max_tr,
            curvature_zero_fraction=0.0,
            tolerances=tol_echo,
        )

    s = skew_symmetrizer(coeff.matrix, chart, tolerances)
    a = spd_sqrt(s, chart)
    frame = FrameChange(a, chart)
    theta_prime = gauge_transform(theta, frame)

    # In the transformed frame a metric connection is skew up to a multiple
    # of the identity: rescaling a frame by a scalar field adds d(log scale)
    # times the identity to its connection matrix, and the determinant-one
    # normalization of the symmetrizer fixes that scalar arbitrarily.  The
    # decidable conditions are therefore an antisymmetric off-diagonal pair
    # and equal diagonal entries; the leftover identity component is the
    # closed trace form, whose potential rescales the metric below.
    off_diag = theta_prime.entries[0][1] + theta_prime.entries[1][0]
    diag_diff = theta_prime.entries[0][0] - theta_prime.entries[1][1]
    condition_exprs = [off_diag.p, off_diag.q, diag_diff.p, diag_diff.q]
    prime_exprs = [e for row in theta_prime.entries for f in row for e in (f.p, f.q)]
    arrays = evaluate_grid_many(condition_exprs + prime_exprs, chart)
    condition_arrays = arrays[:len(condition_exprs)]
    prime_sup = max(float(np.max(np.abs(arr))) for arr in arrays[len(condition_exprs):])
    skew_tol = tolerances.skew * (1.0 + prime_sup)
    tol_echo["skew"] = skew_tol
    residual_peak = np.maximum.reduce([np.abs(arr) for arr in condition_arrays])
    max_skew = float(np.max(residual_peak))
    if max_skew > skew_tol:
        return MetrizabilityReport(
            verdict=Verdict.NOT_METRIC_SKEW,
            chart=chart,
            witness=_first_point(chart, residual_peak > skew_tol),
            max_skew_residual=max_skew,
            min_det_u=min_det,
            max_abs_trace_u=max_tr,
            curvature_zero_fraction=0.0,
            tolerances=tol_echo,
        )

    metric = recover_metric(s)
    tr_theta = trace_connection(theta)
    trace_sup = sup_norm(tr_theta, chart)
    conformal = trace_sup > 1e-10 * (1.0 + theta_sup)
    notes = MetrizabilityReport.notes
    conformal_log = None
    conformal_defects = None
    if conformal:
        # the parallel metric is exp(L) * metric with dL = tr(theta); the
        # residual below certifies exactly that rescaled metric, since
        # d(e^L M) - theta^T e^L M - e^L M theta = e^L (dM + tr(theta) M
        # - theta^T M - M theta) and e^L > 0
        residual = compatibility_residual(theta, metric)
        residual = tuple(
            tuple(
                residual[i][j] + OneForm(tr_theta.p * metric.entries[i][j],
                                         tr_theta.q * metric.entries[i][j])
                for j in range(2)
            )
            for i in range(2)
        )
        conformal_log = potential_on_grid(tr_theta, chart, basepoint)
        conformal_defects = generator_loop_integrals(tr_theta, chart)
        notes = notes + (
            "parallel metric = exp(conformal_log) * metric; the trace form "
            "integrates to the conformal factor",)
        if max(abs(conformal_defects[0]), abs(conformal_defects[1])) > 1e-9:
            notes = notes + (
                "nonzero conformal loop defect: the metric does not close up "
                "around a periodic generator",)
    else:
        residual = compatibility_residual(theta, metric)
    compat = residual_sup(residual, chart)
    metric_sup = sup_norm(metric.entries, chart)
    compat_tol = tolerances.compat * (1.0 + metric_sup) * (1.0 + theta_sup)
    tol_echo["compat"] = compat_tol
    report = MetrizabilityReport(
        verdict=Verdict.METRIC,
        chart=chart,
        metric=metric,
        conformal_log=conformal_log,
        conformal_defects=conformal_defects,
        max_skew_residual=max_skew,
        min_det_u=min_det,
        max_abs_trace_u=max_tr,
        curvature_zero_fraction=0.0,
        compat_residual=compat,
        tolerances=tol_echo,
        notes=notes,
    )
    if compat > compat_tol:
        # defensive: a skew-passing connection whose recovered metric fails
        # the independent residual check is reported, never asserted metric
        report = replace(report, verdict=Verdict.INCONCLUSIVE,
                         notes=report.notes + ("recovered metric failed the "
                                               "compatibility residual check",))
    return report
