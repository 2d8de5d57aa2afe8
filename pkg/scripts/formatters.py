#!/usr/bin/env python3

import csv
import math
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from models import (
    AngleHistogram,
    GradcheckReport,
    Grid,
    MetricsRecord,
    Polyline,
    SeedResult,
)


METRICS_HEADER = [
    "seed", "epoch", "train_loss", "test_loss", "test_acc",
    "max_residual", "max_abs_weight", "wall_ms", "status",
]
AGGREGATE_HEADER = [
    "epoch", "n_seeds", "train_loss_mean", "train_loss_std", "test_loss_mean",
    "test_loss_std", "test_acc_mean", "test_acc_std", "max_residual_max",
]
CURVATURE_HEADER = ["variant", "seed", "status", "test_acc", "n_points", "kappa_mean", "kappa_std", "kappa_max"]
DEPTH_HEADER = ["variant", "depth", "seed", "status", "test_loss", "test_acc"]
DEPTH_AGGREGATE_HEADER = [
    "variant", "depth", "n_seeds", "test_loss_mean", "test_loss_std", "test_acc_mean", "test_acc_std",
]
GRID_HEADER = ["x", "y", "prediction"]
CONTOUR_HEADER = ["x", "y"]
GRADIENTS_HEADER = ["coordinate", "horizontal", "vertical"]
HISTOGRAM_HEADER = ["bin_left", "bin_right", "count", "empirical_density", "target_density"]
VERIFY_HEADER = ["check", "value", "threshold", "passed"]
DRIFT_HEADER = ["step", "position_residual", "cotangency_residual"]
GRADCHECK_HEADER = ["trial", "max_rel_error", "checked", "skipped"]


def format_float(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def write_csv(path: Path, header: list[str], rows: Iterable[Iterable]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) for v in row])
    return path


def write_metrics_csv(path: Path, records: list[MetricsRecord]) -> Path:
    return write_csv(path, METRICS_HEADER, ([r.to_dict()[k] for k in METRICS_HEADER] for r in records))


def sample_std(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1)) if values.size > 1 else 0.0


def aggregate_rows(results: list[SeedResult]) -> list[list]:
    by_epoch: dict[int, list[MetricsRecord]] = {}
    for result in results:
        if not result.success:
            continue
        for record in result.records:
            by_epoch.setdefault(record.epoch, []).append(record)

    rows = []
    for epoch in sorted(by_epoch):
        records = by_epoch[epoch]
        train = np.array([r.train_loss for r in records])
        test = np.array([r.test_loss for r in records])
        acc = np.array([r.test_acc for r in records])
        rows.append([
            epoch, len(records),
            float(train.mean()), sample_std(train),
            float(test.mean()), sample_std(test),
            float(acc.mean()), sample_std(acc),
            max(r.max_residual for r in records),
        ])
    return rows


def write_aggregate_csv(path: Path, results: list[SeedResult]) -> Path:
    return write_csv(path, AGGREGATE_HEADER, aggregate_rows(results))


def write_grid_csv(path: Path, grid: Grid) -> Path:
    xs, ys = grid.xs, grid.ys
    rows = ((xs[i], ys[j], grid.values[j, i]) for j in range(ys.size) for i in range(xs.size))
    return write_csv(path, GRID_HEADER, rows)


def write_contour_csv(path: Path, contour: Optional[Polyline]) -> Path:
    points = contour.points if contour is not None else np.empty((0, 2))
    return write_csv(path, CONTOUR_HEADER, ((x, y) for x, y in points))


def write_gradients_csv(path: Path, coordinates: np.ndarray, horizontal: np.ndarray,
                        vertical: np.ndarray) -> Path:
    return write_csv(path, GRADIENTS_HEADER, zip(coordinates, horizontal, vertical))


def write_histogram_csv(path: Path, histogram: AngleHistogram, target: np.ndarray) -> Path:
    widths = np.diff(histogram.edges)
    rows = zip(histogram.edges[:-1], histogram.edges[1:], histogram.counts,
               histogram.density, np.asarray(target) / widths)
    return write_csv(path, HISTOGRAM_HEADER, rows)


def _fmt(value: float, digits: int = 4) -> str:
    return "n/a" if value is None or (isinstance(value, float) and math.isnan(value)) else f"{value:.{digits}f}"


def format_training_terminal(variant_results: dict[str, list[SeedResult]]) -> str:
    lines = []
    lines.append("=" * 60)
    lines.append("  Training Summary")
    lines.append("=" * 60)
    for label, results in variant_results.items():
        finals = [r.final for r in results if r.success and r.final is not None]
        failed = sum(1 for r in results if not r.success)
        lines.append("")
        lines.append(f"  {label}: {len(finals)} ok, {failed} failed")
        if finals:
            acc = np.array([f.test_acc for f in finals])
            loss = np.array([f.test_loss for f in finals])
            lines.append(f"    test acc  {acc.mean():.4f} ± {sample_std(acc):.4f}")
            lines.append(f"    test loss {loss.mean():.4f} ± {sample_std(loss):.4f}")
    lines.append("")
    return "\n".join(lines)


def format_curvature_terminal(rows: list[list]) -> str:
    per_variant: dict[str, list[float]] = {}
    for variant, _seed, status, _acc, _n, kappa_mean, _std_, _max in rows:
        values = per_variant.setdefault(variant, [])
        if status == "ok" and not math.isnan(kappa_mean):
            values.append(kappa_mean)

    lines = ["=" * 60, "  Decision-Boundary Curvature", "=" * 60, ""]
    for variant, values in per_variant.items():
        if values:
            arr = np.array(values)
            lines.append(f"  {variant:<20} κ̄ = {arr.mean():10.3f} ± {sample_std(arr):.3f}  ({arr.size} seeds)")
        else:
            lines.append(f"  {variant:<20} no boundary extracted")
    lines.append("")
    return "\n".join(lines)


def format_depth_terminal(aggregate: list[list]) -> str:
    lines = ["=" * 60, "  Accuracy vs Depth", "=" * 60, ""]
    for variant, depth, n, _loss, _loss_std, acc, acc_std in aggregate:
        lines.append(f"  {variant:<20} depth {depth:>2}: {_fmt(acc)} ± {_fmt(acc_std)}  (n={n})")
    lines.append("")
    return "\n".join(lines)


def format_verify_terminal(rows: list[list]) -> str:
    lines = ["=" * 60, "  Sampler Verification", "=" * 60, ""]
    for check, value, threshold, passed in rows:
        mark = "✅" if passed else "❌"
        lines.append(f"  {mark} {check:<24} {value:.4e}  (threshold {threshold:.4e})")
    failed = sum(1 for row in rows if not row[3])
    lines.append("")
    lines.append("  All checks passed" if not failed else f"  {failed} check(s) failed")
    return "\n".join(lines)


def format_gradcheck_terminal(report: GradcheckReport) -> str:
    mark = "✅" if report.passed else "❌"
    return (
        f"{mark} Max relative gradient error: {report.max_rel_error:.3e} "
        f"(threshold {report.threshold:.0e}, {report.checked} entries checked, "
        f"{report.skipped} skipped at ReLU kinks)"
    )
