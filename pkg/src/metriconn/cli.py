"""Batch command-line front-end.

Exit codes: 0 = metric / success, 1 = negative verdict (not metric, not
compatible, no volume form), 2 = inconclusive or flat with a periodic
defect, 3 = input error.  Reports go to standard output; diagnostics to
standard error.  With ``--json`` the report is a single flat JSON object
with dotted keys and no timestamps, so identical inputs produce
byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .expr import DomainError, ParseError, to_source
from .forms import Chart, sup_norm
from .connection import ConnectionMatrix, NotFlat, SingularFrame, \
    compatibility_residual, residual_sup
from .metrizability import (
    DEFAULT_TOLERANCES,
    MetrizabilityReport,
    NotSPD,
    Verdict,
    check_metrizability,
)
from .volume_euler import NotCompatible, euler_form, volume_criterion
from .gallery import GALLERY, semi_symmetric, levi_civita, torsion, RiemannianMetric2D
from .specfile import SpecError, SpecFile, load_spec

__all__ = ["run", "main"]

EXIT_SUCCESS = 0
EXIT_NEGATIVE = 1
EXIT_INCONCLUSIVE = 2
EXIT_INPUT_ERROR = 3

# a flat verdict with a periodic loop defect above this is only locally metric
DEFECT_THRESHOLD = 1e-6


class _Report:
    """Flat key/value report: dotted keys, scalar values only."""

    def __init__(self, command: str):
        self.fields: dict[str, object] = {"command": command}
        self.started = time.monotonic()

    def put(self, key: str, value) -> None:
        if isinstance(value, (np.floating, np.integer)):
            value = value.item()
        self.fields[key] = value

    def put_all(self, items) -> None:
        for key, value in items:
            self.put(key, value)

    def to_json(self) -> str:
        return json.dumps(self.fields, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"{key}: {value}" for key, value in self.fields.items()]
        elapsed = time.monotonic() - self.started
        lines.append(f"wall_clock: {elapsed:.3f} s")
        return "\n".join(lines) + "\n"

    def emit(self, out, as_json: bool) -> None:
        out.write(self.to_json() if as_json else self.to_text())


def _apply_overrides(spec: SpecFile, args) -> SpecFile:
    chart = spec.chart
    if args.grid is not None:
        chart = chart.with_grid(args.grid[0], args.grid[1])
    if chart is spec.chart:
        return spec
    def rebind(conn):
        return None if conn is None else ConnectionMatrix(conn.entries, chart)
    return SpecFile(chart, rebind(spec.connection), rebind(spec.connection2),
                    spec.metric, spec.oneform, spec.digest, spec.source)


def _tolerances(args):
    scale = getattr(args, "tol", None)
    return DEFAULT_TOLERANCES if not scale else DEFAULT_TOLERANCES.scaled(scale)


def _chart_fields(chart: Chart):
    yield "chart.x0", chart.x_range[0]
    yield "chart.x1", chart.x_range[1]
    yield "chart.y0", chart.y_range[0]
    yield "chart.y1", chart.y_range[1]
    yield "chart.periodic_x", chart.periodic_x
    yield "chart.periodic_y", chart.periodic_y
    yield "grid.nx", chart.nx
    yield "grid.ny", chart.ny


def _verdict_fields(report: MetrizabilityReport):
    yield "verdict", report.verdict.value
    yield "curvature_zero_fraction", report.curvature_zero_fraction
    yield "normalization", report.normalization
    if report.witness is not None:
        yield "witness.x", report.witness[0]
        yield "witness.y", report.witness[1]
    if report.min_det_u is not None:
        yield "diagnostics.min_det_u", report.min_det_u
    if report.max_abs_trace_u is not None:
        yield "diagnostics.max_abs_trace_u", report.max_abs_trace_u
    if report.max_skew_residual is not None:
        yield "diagnostics.max_skew_residual", report.max_skew_residual
    if report.compat_residual is not None:
        yield "diagnostics.compat_residual", report.compat_residual
    if report.frame_residual is not None:
        yield "diagnostics.frame_residual", report.frame_residual
    if report.loop_defect is not None:
        yield "diagnostics.loop_defect", report.loop_defect
    for name, value in sorted(report.tolerances.items()):
        yield f"tolerance.{name}", value
    if report.metric is not None:
        g = report.metric.entries
        yield "metric.g.1.1", to_source(g[0][0])
        yield "metric.g.1.2", to_source(g[0][1])
        yield "metric.g.2.2", to_source(g[1][1])
    if report.conformal_log is not None:
        yield "metric.conformal", True
        yield "metric.conformal_log.min", float(np.min(report.conformal_log))
        yield "metric.conformal_log.max", float(np.max(report.conformal_log))
        yield "metric.conformal_defect.x", report.conformal_defects[0]
        yield "metric.conformal_defect.y", report.conformal_defects[1]
    elif report.metric is not None:
        yield "metric.conformal", False
    if report.metric_samples is not None:
        samples = report.metric_samples
        yield "metric.samples.g11.min", float(np.min(samples[:, :, 0, 0]))
        yield "metric.samples.g11.max", float(np.max(samples[:, :, 0, 0]))
    yield "notes", "; ".join(report.notes)


def _check_exit_code(report: MetrizabilityReport) -> int:
    if report.verdict is Verdict.METRIC:
        return EXIT_SUCCESS
    if report.verdict is Verdict.FLAT:
        defect = report.loop_defect or 0.0
        return EXIT_SUCCESS if defect <= DEFECT_THRESHOLD else EXIT_INCONCLUSIVE
    if report.verdict in (Verdict.NOT_METRIC_EIGEN, Verdict.NOT_METRIC_SKEW):
        return EXIT_NEGATIVE
    return EXIT_INCONCLUSIVE


def _run_check(spec: SpecFile, args, report: _Report) -> int:
    theta = spec.require_connection()
    basepoint = tuple(args.basepoint) if args.basepoint else None
    result = check_metrizability(theta, tolerances=_tolerances(args),
                                 basepoint=basepoint)
    report.put_all(_chart_fields(theta.chart))
    report.put_all(_verdict_fields(result))
    return _check_exit_code(result)


def _cmd_check(args, out, err) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    report = _Report("check")
    report.put("spec.digest", spec.digest)
    code = _run_check(spec, args, report)
    report.emit(out, args.json)
    return code


def _cmd_metric(args, out, err) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    theta = spec.require_connection()
    basepoint = tuple(args.basepoint) if args.basepoint else None
    result = check_metrizability(theta, tolerances=_tolerances(args),
                                 basepoint=basepoint)
    report = _Report("metric")
    report.put("spec.digest", spec.digest)
    report.put_all(_chart_fields(theta.chart))
    report.put_all(_verdict_fields(result))
    report.emit(out, args.json)
    needs_dump = result.metric_samples is not None or result.conformal_log is not None
    if not args.json and needs_dump:
        samples = result.metric_grid()
        chart = result.chart
        xs, ys = chart.xs("node"), chart.ys("node")
        out.write("# sampled metric: x y g11 g12 g22\n")
        for i in range(chart.nx):
            for j in range(chart.ny):
                out.write(f"{xs[i]:.9g} {ys[j]:.9g} "
                          f"{samples[i, j, 0, 0]:.12g} {samples[i, j, 0, 1]:.12g} "
                          f"{samples[i, j, 1, 1]:.12g}\n")
    return _check_exit_code(result)


def _cmd_volume(args, out, err) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    theta = spec.require_connection()
    basepoint = tuple(args.basepoint) if args.basepoint else None
    result = volume_criterion(theta, tolerances=_tolerances(args),
                              basepoint=basepoint)
    report = _Report("volume")
    report.put("spec.digest", spec.digest)
    report.put_all(_chart_fields(theta.chart))
    report.put("closed", result.closed)
    report.put("trace_curvature_max", result.trace_curvature_max)
    report.put("tolerance.closed", result.threshold)
    report.put("defect.x", result.period_defects[0])
    report.put("defect.y", result.period_defects[1])
    if result.reconstruction_residual is not None:
        report.put("diagnostics.reconstruction_residual", result.reconstruction_residual)
    if result.log_f is not None:
        report.put("log_f.min", float(np.min(result.log_f)))
        report.put("log_f.max", float(np.max(result.log_f)))
    report.emit(out, args.json)
    if not result.closed:
        return EXIT_NEGATIVE
    defect = max(abs(result.period_defects[0]), abs(result.period_defects[1]))
    return EXIT_SUCCESS if defect <= DEFECT_THRESHOLD else EXIT_INCONCLUSIVE


def _cmd_euler(args, out, err) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    theta = spec.require_connection()
    metric = spec.require_metric()
    report = _Report("euler")
    report.put("spec.digest", spec.digest)
    report.put_all(_chart_fields(theta.chart))
    try:
        result = euler_form(theta, metric, tolerances=_tolerances(args))
    except NotCompatible as exc:
        report.put("error", "NotCompatible")
        report.put("error.residual", exc.residual)
        report.put("error.tolerance", exc.tolerance)
        report.emit(out, args.json)
        return EXIT_NEGATIVE
    report.put("euler_number", result.euler_number)
    report.put("euler_form.coefficient", to_source(result.euler_form.r))
    report.put("diagnostics.skew_residual", result.skew_residual)
    report.emit(out, args.json)
    return EXIT_SUCCESS


def _cmd_compare(args, out, err) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    theta1 = spec.require_connection()
    if args.other:
        other = _apply_overrides(load_spec(args.other), args)
        if other.chart != theta1.chart:
            raise SpecError(other.source, 0,
                            "the second spec's chart must match the first")
        theta2 = other.require_connection()
    elif spec.connection2 is not None:
        theta2 = spec.connection2
    else:
        raise SpecError(spec.source, 0,
                        "compare needs a second spec file or a [connection2] section")
    if args.metric:
        metric = _apply_overrides(load_spec(args.metric), args).require_metric()
    else:
        metric = spec.require_metric()
    report = _Report("compare")
    report.put("spec.digest", spec.digest)
    report.put_all(_chart_fields(theta1.chart))
    try:
        first = euler_form(theta1, metric, tolerances=_tolerances(args),
                           label="first connection")
        second = euler_form(theta2, metric, tolerances=_tolerances(args),
                            label="second connection")
    except NotCompatible as exc:
        report.put("error", "NotCompatible")
        report.put("error.which", exc.label)
        report.put("error.residual", exc.residual)
        report.emit(out, args.json)
        return EXIT_NEGATIVE
    report.put("euler_number.first", first.euler_number)
    report.put("euler_number.second", second.euler_number)
    report.put("euler_number.difference",
               abs(first.euler_number - second.euler_number))
    report.emit(out, args.json)
    return EXIT_SUCCESS


def _put_connection(report: _Report, theta: ConnectionMatrix, prefix: str = "theta"):
    for i in range(theta.m):
        for j in range(theta.m):
            form = theta.entries[i][j]
            report.put(f"{prefix}.{i + 1}.{j + 1}.dx", to_source(form.p))
            report.put(f"{prefix}.{i + 1}.{j + 1}.dy", to_source(form.q))


def _cmd_torsion(args, out, err) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    theta = spec.require_connection()
    field = torsion(theta)
    report = _Report("torsion")
    report.put("spec.digest", spec.digest)
    report.put_all(_chart_fields(theta.chart))
    t1 = field.component(1, 1, 2)
    t2 = field.component(2, 1, 2)
    report.put("torsion.1.12", to_source(t1))
    report.put("torsion.2.12", to_source(t2))
    report.put("torsion.sup", sup_norm([t1, t2], theta.chart))
    report.emit(out, args.json)
    return EXIT_SUCCESS


def _cmd_levi_civita(args, out, err) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    metric = spec.require_metric()
    g = RiemannianMetric2D(metric, spec.chart)
    theta = levi_civita(g)
    report = _Report("levi-civita")
    report.put("spec.digest", spec.digest)
    report.put_all(_chart_fields(spec.chart))
    _put_connection(report, theta)
    report.put("diagnostics.compat_residual",
               residual_sup(compatibility_residual(theta, metric), spec.chart))
    report.emit(out, args.json)
    return EXIT_SUCCESS


def _cmd_semi_symmetric(args, out, err) -> int:
    spec = _apply_overrides(load_spec(args.spec), args)
    metric = spec.require_metric()
    u = spec.require_oneform()
    g = RiemannianMetric2D(metric, spec.chart)
    theta = semi_symmetric(g, u)
    report = _Report("semi-symmetric")
    report.put("spec.digest", spec.digest)
    report.put_all(_chart_fields(spec.chart))
    _put_connection(report, theta)
    field = torsion(theta)
    report.put("torsion.1.12", to_source(field.component(1, 1, 2)))
    report.put("torsion.2.12", to_source(field.component(2, 1, 2)))
    report.put("diagnostics.compat_residual",
               residual_sup(compatibility_residual(theta, metric), spec.chart))
    report.emit(out, args.json)
    return EXIT_SUCCESS


def _cmd_example(args, out, err) -> int:
    builder = GALLERY.get(args.name)
    if builder is None:
        raise SpecError(args.name, 0,
                        f"unknown example; available: {', '.join(sorted(GALLERY))}")
    entry = builder()
    theta = entry.connection
    if args.grid is not None:
        chart = theta.chart.with_grid(args.grid[0], args.grid[1])
        theta = ConnectionMatrix(theta.entries, chart)
    report = _Report("example")
    report.put("example", entry.name)
    report.put("description", entry.description)
    report.put("spec.digest", "gallery:" + entry.name)
    report.put_all(_chart_fields(theta.chart))
    basepoint = tuple(args.basepoint) if args.basepoint else None
    result = check_metrizability(theta, tolerances=_tolerances(args),
                                 basepoint=basepoint)
    report.put_all(_verdict_fields(result))
    volume = volume_criterion(theta, tolerances=_tolerances(args))
    report.put("volume.closed", volume.closed)
    report.put("volume.defect.x", volume.period_defects[0])
    report.put("volume.defect.y", volume.period_defects[1])
    if entry.metric is not None:
        euler = euler_form(theta, entry.metric, tolerances=_tolerances(args))
        report.put("euler_number", euler.euler_number)
    report.emit(out, args.json)
    return _check_exit_code(result)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"),
                        help="override the chart grid")
    parser.add_argument("--tol", type=float, default=None, metavar="T",
                        help="scale all tolerances by T")
    parser.add_argument("--json", action="store_true",
                        help="emit the machine-readable flat report")
    parser.add_argument("--basepoint", type=float, nargs=2, metavar=("X", "Y"),
                        help="basepoint for frame and volume integrations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metriconn",
        description="Local metrizability of rank-2 connections over surface charts.")
    sub = parser.add_subparsers(dest="command", required=True)

    specs = [
        ("check", _cmd_check, "decide local metrizability of the connection"),
        ("metric", _cmd_metric, "recover and print the compatible metric"),
        ("volume", _cmd_volume, "test the parallel-volume-form criterion"),
        ("euler", _cmd_euler, "Euler form and number of a metric connection"),
        ("torsion", _cmd_torsion, "torsion of a coordinate-frame connection"),
        ("levi-civita", _cmd_levi_civita, "Levi-Civita connection of the metric"),
        ("semi-symmetric", _cmd_semi_symmetric,
         "metric connection with torsion built from a one-form"),
    ]
    for name, handler, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("spec", help="spec file")
        _add_common(p)
        p.set_defaults(handler=handler)

    p = sub.add_parser("compare",
                       help="compare Euler numbers of two metric-equivalent connections")
    p.add_argument("spec", help="spec file with the first connection")
    p.add_argument("other", nargs="?", default=None,
                   help="spec file with the second connection "
                        "(default: [connection2] of the first file)")
    p.add_argument("--metric", default=None,
                   help="spec file providing the shared metric "
                        "(default: [metric] of the first file)")
    _add_common(p)
    p.set_defaults(handler=_cmd_compare)

    p = sub.add_parser("example", help="run a named gallery example")
    p.add_argument("name", help=f"one of: {', '.join(sorted(GALLERY))}")
    _add_common(p)
    p.set_defaults(handler=_cmd_example)
    return parser


def run(argv=None, out=None, err=None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT_ERROR if exc.code else EXIT_SUCCESS
    try:
        return args.handler(args, out, err)
    except (SpecError, ParseError, NotSPD, DomainError,
            SingularFrame, NotFlat, ValueError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INPUT_ERROR


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
