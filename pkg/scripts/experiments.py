#!/usr/bin/env python3

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from core_math import make_rng, make_streams
from data import write_dataset_csv
from formatters import (
    CURVATURE_HEADER,
    DEPTH_AGGREGATE_HEADER,
    DEPTH_HEADER,
    DRIFT_HEADER,
    GRADCHECK_HEADER,
    VERIFY_HEADER,
    format_curvature_terminal,
    format_depth_terminal,
    format_gradcheck_terminal,
    format_training_terminal,
    format_verify_terminal,
    sample_std,
    write_aggregate_csv,
    write_contour_csv,
    write_csv,
    write_grid_csv,
    write_gradients_csv,
    write_histogram_csv,
    write_metrics_csv,
)
from metrics import (
    boundary_curvature,
    cross_section_coordinates,
    cross_section_gradients,
    prediction_grid,
)
from models import (
    Axis,
    Batch,
    CurvatureStats,
    ExperimentKind,
    GradcheckReport,
    Hyper,
    LossKind,
    RunConfig,
    SeedResult,
    Variant,
)
from nn import backprop, build_model, finite_difference_check, init_standard
from run_log import RunLogger
from training import make_datasets, train_seed
from utils import write_results_file
from verify import (
    clt_scaling,
    ergodic_average,
    histogram_l1,
    orth_drift,
    quadrature_expectation,
    sample_circle_potential,
    target_bin_probabilities,
    uniformity_deviation,
)


def fan_out(job: Callable, args: list[tuple], threads: int) -> list:
    if threads <= 1 or len(args) <= 1:
        return [job(*a) for a in args]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda a: job(*a), args))


def variant_dir(config: RunConfig, out: Path, variant: Variant) -> Path:
    return out / variant.label if len(config.variants) > 1 else out


def _export_seed(config: RunConfig, result: SeedResult, directory: Path,
                 want_curvature: bool) -> Optional[CurvatureStats]:
    if result.model is None or not (want_curvature or config.export_grid or config.export_gradients):
        return None
    study = config.study
    stats = None
    if want_curvature or config.export_grid:
        grid = prediction_grid(result.model, study.grid_extent, study.grid_resolution)
        contour, stats = boundary_curvature(grid, study.level)
        if config.export_grid:
            write_grid_csv(directory / f"grid_seed{result.seed}.csv", grid)
            write_contour_csv(directory / f"contour_seed{result.seed}.csv", contour)
    if config.export_gradients:
        n = study.cross_section_points
        write_gradients_csv(
            directory / f"gradients_seed{result.seed}.csv",
            cross_section_coordinates(study.grid_extent, n, Axis.HORIZONTAL),
            cross_section_gradients(result.model, Axis.HORIZONTAL, n, study.grid_extent),
            cross_section_gradients(result.model, Axis.VERTICAL, n, study.grid_extent),
        )
    return stats


def _train_job(config: RunConfig, variant: Variant, seed: int, directory: Path,
               want_curvature: bool) -> tuple[SeedResult, Optional[CurvatureStats]]:
    result = train_seed(config, variant, seed)
    write_metrics_csv(directory / f"metrics_seed{seed}.csv", result.records)
    return result, _export_seed(config, result, directory, want_curvature)


def _depth_job(config: RunConfig, variant: Variant, seed: int, depth: int) -> SeedResult:
    return train_seed(config, variant, seed, hidden=[config.study.width] * depth)


def export_datasets(config: RunConfig, out: Path) -> None:
    for seed in config.seeds:
        train, test = make_datasets(config, make_streams(seed))
        write_dataset_csv(train, out / "data" / f"train_seed{seed}.csv")
        write_dataset_csv(test, out / "data" / f"test_seed{seed}.csv")


def _train_variants(config: RunConfig, out: Path, logger: RunLogger,
                    want_curvature: bool) -> dict[str, list[tuple[SeedResult, Optional[CurvatureStats]]]]:
    if config.data.export:
        export_datasets(config, out)
    outcomes = {}
    for variant in config.variants:
        directory = variant_dir(config, out, variant)
        logging.info(f"[{variant.label}] {variant.optimizer.name.value}, {len(config.seeds)} seed(s)")
        jobs = [(config, variant, seed, directory, want_curvature) for seed in config.seeds]
        results = fan_out(_train_job, jobs, config.threads)
        write_aggregate_csv(directory / "aggregate.csv", [r for r, _ in results])
        for result, _ in results:
            logger.log_seed(result, config.experiment.value)
        outcomes[variant.label] = results
    return outcomes


def _exit_code(results: list[SeedResult]) -> int:
    if results and not any(r.success for r in results):
        logging.error("Every seed failed")
        return 1
    return 0


def run_training(config: RunConfig, out: Path, logger: RunLogger) -> int:
    outcomes = _train_variants(config, out, logger, want_curvature=False)
    by_variant = {label: [r for r, _ in results] for label, results in outcomes.items()}
    print(format_training_terminal(by_variant))

    summary = {}
    for label, results in by_variant.items():
        finals = [r.final for r in results if r.success and r.final is not None]
        summary[label] = {
            "seeds": len(results),
            "failed": sum(1 for r in results if not r.success),
            "test_acc_mean": float(np.mean([f.test_acc for f in finals])) if finals else None,
        }
    write_results_file(out / "summary.json", summary)
    return _exit_code([r for results in by_variant.values() for r in results])


def curvature_rows(outcomes: dict) -> list[list]:
    rows = []
    nan = float("nan")
    for label, results in outcomes.items():
        for result, stats in results:
            final = result.final
            status = result.status
            if result.success and stats is None:
                status = "no-boundary"
            rows.append([
                label, result.seed, status,
                final.test_acc if final is not None and result.success else nan,
                stats.n_points if stats else 0,
                stats.mean if stats else nan,
                stats.std if stats else nan,
                stats.max if stats else nan,
            ])
    return rows


def run_curvature_study(config: RunConfig, out: Path, logger: RunLogger) -> int:
    outcomes = _train_variants(config, out, logger, want_curvature=True)
    rows = curvature_rows(outcomes)
    write_csv(out / "curvature.csv", CURVATURE_HEADER, rows)
    print(format_curvature_terminal(rows))
    return _exit_code([r for results in outcomes.values() for r, _ in results])


def depth_aggregate(results: list[SeedResult]) -> list[list]:
    groups: dict[tuple[str, int], list] = {}
    for result in results:
        if result.success and result.final is not None:
            groups.setdefault((result.variant, result.depth), []).append(result.final)
    rows = []
    for (label, depth), finals in groups.items():
        loss = np.array([f.test_loss for f in finals])
        acc = np.array([f.test_acc for f in finals])
        rows.append([label, depth, len(finals), float(loss.mean()), sample_std(loss), float(acc.mean()), sample_std(acc)])
    return rows


def run_depth_study(config: RunConfig, out: Path, logger: RunLogger) -> int:
    jobs = [
        (config, variant, seed, depth)
        for depth in config.study.depths
        for variant in config.variants
        for seed in config.seeds
    ]
    logging.info(f"Depth study: {len(config.study.depths)} depth(s) × {len(config.variants)} variant(s) "
                 f"× {len(config.seeds)} seed(s)")
    results = fan_out(_depth_job, jobs, config.threads)
    nan = float("nan")
    rows = []
    for result in results:
        final = result.final if result.success else None
        rows.append([
            result.variant, result.depth, result.seed, result.status,
            final.test_loss if final else nan, final.test_acc if final else nan,
        ])
        logger.log_seed(result, config.experiment.value)
    write_csv(out / "depth.csv", DEPTH_HEADER, rows)
    aggregate = depth_aggregate(results)
    write_csv(out / "aggregate.csv", DEPTH_AGGREGATE_HEADER, aggregate)
    print(format_depth_terminal(aggregate))
    return _exit_code(results)


def _check(name: str, value: float, threshold: float) -> list:
    passed = bool(value <= threshold)
    level = logging.INFO if passed else logging.WARNING
    logging.log(level, f"{name}: {value:.4e} (threshold {threshold:.4e})")
    return [name, value, threshold, passed]


def run_sample_verify(config: RunConfig, out: Path, logger: RunLogger) -> int:
    s = config.sampler
    seed = config.seeds[0]
    rows = []

    histogram = sample_circle_potential(s.beta, s.radius, s.h, s.steps, s.burn,
                                        make_rng(seed, 0), bins=s.bins, chains=s.chains, slope=s.slope)
    target = target_bin_probabilities(histogram.edges, s.beta, s.radius, s.slope)
    write_histogram_csv(out / "histogram.csv", histogram, target)
    rows.append(_check("histogram_l1", histogram_l1(histogram, s.beta, s.radius, s.slope), s.l1_threshold))

    halved = sample_circle_potential(s.beta, s.radius, s.h / 2, 2 * s.steps, 2 * s.burn,
                                     make_rng(seed, 1), bins=s.bins, chains=s.chains, slope=s.slope)
    rows.append(_check("halved_step_l1", histogram_l1(halved, s.beta, s.radius, s.slope), s.l1_threshold))

    # one post-burn-in snapshot per chain keeps the samples independent
    uniform = sample_circle_potential(s.beta, s.radius, s.h, 2, 1, make_rng(seed, 2), bins=s.bins,
                                      chains=s.chains * (s.steps - s.burn), slope=0.0)
    deviation, sigma = uniformity_deviation(uniform)
    rows.append(_check("uniform_max_deviation", deviation, s.uniform_sigmas * sigma))

    observable = np.cos
    ergodic = ergodic_average(observable, s, make_rng(seed, 3))
    exact = quadrature_expectation(observable, s.beta, s.radius, s.slope)
    z = abs(ergodic.final - exact) / ergodic.standard_error if ergodic.standard_error > 0 else math.inf
    rows.append(_check("ergodic_cos_zscore", z, s.ergodic_sigmas))

    clt = clt_scaling(observable, s, make_rng(seed, 4))
    rows.append(_check("clt_variance_ratio", abs(clt.ratio - 1.0), s.clt_tolerance))

    hyper = Hyper(h=s.orth_h, gamma=s.orth_gamma, tau=s.orth_tau)
    drift = orth_drift(s.orth_rows, s.orth_cols, hyper, s.orth_steps, make_rng(seed, 5))
    write_csv(out / "orth_drift.csv", DRIFT_HEADER, zip(drift.steps, drift.position, drift.cotangency))
    rows.append(_check("orth_max_residual", float(drift.position.max()) if drift.position.size else 0.0,
                       s.orth_threshold))
    # extrapolated growth over the whole run must stay below the residual bound
    rows.append(_check("orth_drift_growth", max(drift.slope, 0.0) * s.orth_steps, s.orth_threshold))

    write_csv(out / "verify.csv", VERIFY_HEADER, rows)
    for name, value, threshold, passed in rows:
        logger.log_check(config.experiment.value, name, value, threshold, passed)
    print(format_verify_terminal(rows))
    return 0 if all(row[3] for row in rows) else 1


def gradcheck_command(config: RunConfig, out: Optional[Path] = None) -> GradcheckReport:
    g = config.gradcheck
    kind = LossKind.BCE if g.widths[-1] == 1 else LossKind.CROSS_ENTROPY
    seed = config.seeds[0]
    worst = GradcheckReport(max_rel_error=0.0, checked=0, skipped=0, threshold=g.threshold)
    rows = []
    for trial in range(g.trials):
        rng = make_rng(seed, trial)
        model = build_model(g.widths, g.activation, kind)
        if not g.zero_weights:
            init_standard(rng, model)
        labels = rng.integers(0, 2, size=g.batch)
        batch = Batch(rng.standard_normal((g.batch, g.widths[0])), labels)
        _, grads = backprop(model, batch, kind)
        if g.corrupt:
            grads.weights[-1][0, 0] += 1.0
        report = finite_difference_check(model, batch, kind, eps=g.eps, grads=grads, threshold=g.threshold)
        rows.append([trial, report.max_rel_error, report.checked, report.skipped])
        worst = replace(
            worst,
            max_rel_error=max(worst.max_rel_error, report.max_rel_error),
            checked=worst.checked + report.checked,
            skipped=worst.skipped + report.skipped,
        )
    if out is not None:
        write_csv(Path(out) / "gradcheck.csv", GRADCHECK_HEADER, rows)
    print(format_gradcheck_terminal(worst))
    return worst


def run_gradcheck(config: RunConfig, out: Path, logger: RunLogger) -> int:
    report = gradcheck_command(config, out)
    logger.log_check(config.experiment.value, "max_rel_error", report.max_rel_error,
                     report.threshold, report.passed)
    return 0 if report.passed else 1


RUNNERS = {
    ExperimentKind.TRAIN: run_training,
    ExperimentKind.CURVATURE_STUDY: run_curvature_study,
    ExperimentKind.ORTHO_DEPTH_STUDY: run_depth_study,
    ExperimentKind.SAMPLE_VERIFY: run_sample_verify,
    ExperimentKind.GRADCHECK: run_gradcheck,
}


def run_experiment(config: RunConfig, out_dir: Optional[str] = None) -> int:
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    logger = RunLogger(str(out))
    code = RUNNERS[config.experiment](config, out, logger)
    logging.info(logger.get_summary())
    return code
