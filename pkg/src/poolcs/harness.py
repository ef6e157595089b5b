"""Experiment orchestration: trials, gamma cross-validation, sweeps, CSV output.

Every trial derives its own random stream from (seed, cell parameters,
trial index), so results are bit-identical regardless of execution order or
parallelism. A cell is one (n, f_s, q, sigma) combination; for each cell the
penalty scale gamma is chosen by cross-validation on preliminary runs whose
streams are disjoint from the main trials.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from itertools import product
from typing import Mapping

import numpy as np

from .errors import AssumptionError, ConfigError
from .metrics import classify, confusion, rrmse, sensitivity, specificity
from .numerics import RngStream, spectral_norm_sq
from .pooling import generate_pooling_matrix, surrogate_matrix, surrogate_measurements, validate_pooling
from .simulate import GroundTruth, NoiseParams, SignalSpec, generate_signal, measure_exact, measure_linearized
from .solver import LassoProblem, SolverConfig, solve
from .weights import (
    WeightParams,
    direction_matrices,
    gradient_at_truth,
    per_coordinate_weights,
    uniform_weight,
)

ESTIMATORS = ("lasso", "wlasso")
NOISE_MODELS = ("exact", "linearized")

# Geometric grid spanning the scales where the theoretical weights produce
# useful recovery. The finite-sample constants inflate the weights by roughly
# three orders of magnitude over the oracle gradient, so the cross-validated
# multiplier lands well below the gamma > 2 regime the error bounds assume;
# the bound arithmetic still enforces gamma > 2 where it is evaluated.
DEFAULT_GAMMA_GRID = (
    1e-05,
    3.3385071115838905e-05,
    0.00011145629734096199,
    0.0003720976413036098,
    0.001242250621695693,
    0.00414726253490058,
    0.013845665466371004,
    0.04622385262409103,
    0.15431866071033357,
    0.5151939462315501,
    1.7199786533389982,
    5.742160965944717,
    19.17024522066586,
    64.0,
)

# stream path labels
_CELL, _TRIAL, _CV = 2, 3, 4
_MATRIX, _SIGNAL, _NOISE = 11, 12, 13


@dataclass(frozen=True)
class ExperimentConfig:
    p: int = 1000
    n_list: tuple[int, ...] = (150, 200, 300, 375, 500)
    f_s_list: tuple[float, ...] = (0.02, 0.04, 0.08, 0.15)
    q_list: tuple[float, ...] = (0.05, 0.1, 0.25, 0.5, 0.75)
    sigma: float = 0.05
    sigma_list: tuple[float, ...] | None = None
    q_a: float = 0.95
    trials: int = 200
    cv_runs: int = 5
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    estimators: tuple[str, ...] = ESTIMATORS
    threshold: float = 0.2
    noise_model: str = "exact"
    seed: int = 1
    force_assumptions: bool = False

    def __post_init__(self):
        if self.p < 2:
            raise ConfigError("p must be at least 2")
        for name in ("n_list", "f_s_list", "q_list", "gamma_grid"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name} must be nonempty")
        if any(g <= 0.0 for g in self.gamma_grid):
            raise ConfigError("gamma grid entries must be positive")
        for est in self.estimators:
            if est not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {est!r}")
        if self.noise_model not in NOISE_MODELS:
            raise ConfigError(f"noise_model must be one of {NOISE_MODELS}")
        if self.trials < 0 or self.cv_runs < 1:
            raise ConfigError("need trials >= 0 and cv_runs >= 1")
        if self.threshold < 0.0:
            raise ConfigError("threshold must be nonnegative")


@dataclass(frozen=True)
class Cell:
    n: int
    f_s: float
    q: float
    sigma: float


def config_cells(config: ExperimentConfig) -> tuple[Cell, ...]:
    sigmas = config.sigma_list if config.sigma_list else (config.sigma,)
    return tuple(
        Cell(n=n, f_s=f, q=q, sigma=s)
        for s, q, f, n in product(sigmas, config.q_list, config.f_s_list, config.n_list)
    )


# CSV schema: one row per (trial, estimator), fields in this exact order.
TRIAL_FIELDS = (
    "trial_index",
    "n",
    "p",
    "q",
    "f_s",
    "sigma",
    "q_a",
    "estimator",
    "gamma",
    "rrmse",
    "sensitivity",
    "specificity",
    "lambda_hat",
    "l1_norm_true",
    "c1_violated",
    "pooling_warnings",
    "solver_iterations",
    "converged",
    "noise_model",
)


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    n: int
    p: int
    q: float
    f_s: float
    sigma: float
    q_a: float
    estimator: str
    gamma: float
    rrmse: float
    sensitivity: float | None
    specificity: float | None
    lambda_hat: float
    l1_norm_true: float
    c1_violated: bool
    pooling_warnings: int
    solver_iterations: int
    converged: bool
    noise_model: str


@dataclass(frozen=True)
class TrialSkipped:
    trial_index: int
    cell: Cell
    reason: str


@dataclass(frozen=True)
class CellAggregate:
    n: int
    p: int
    q: float
    f_s: float
    sigma: float
    q_a: float
    estimator: str
    gamma: float
    n_trials: int
    n_skipped: int
    rrmse_mean: float | None
    rrmse_std: float | None
    sensitivity_mean: float | None
    sensitivity_std: float | None
    specificity_mean: float | None
    specificity_std: float | None
    noise_model: str


AGGREGATE_FIELDS = tuple(f.name for f in fields(CellAggregate))


@dataclass(frozen=True)
class CrossValResult:
    gamma: dict[str, float]
    grid: tuple[float, ...]
    mean_rrmse: dict[str, np.ndarray]
    runs_used: int


@dataclass(frozen=True)
class SweepResult:
    records: list[TrialRecord]
    skipped: list[TrialSkipped]
    aggregates: list[CellAggregate]
    gamma_by_cell: dict[tuple[Cell, str], float]
    failed_cells: list[tuple[Cell, str]]


def _float_label(x: float) -> int:
    """Stable 64-bit label for a float parameter (its IEEE-754 bit pattern)."""
    return int(np.float64(x).view(np.uint64))


def cell_stream(config: ExperimentConfig, cell: Cell) -> RngStream:
    model_id = NOISE_MODELS.index(config.noise_model)
    return RngStream(config.seed).child(
        _CELL,
        cell.n,
        config.p,
        _float_label(cell.q),
        _float_label(cell.f_s),
        _float_label(cell.sigma),
        _float_label(config.q_a),
        model_id,
    )


def trial_stream(config: ExperimentConfig, cell: Cell, trial_index: int) -> RngStream:
    return cell_stream(config, cell).child(_TRIAL, trial_index)


def cv_stream(config: ExperimentConfig, cell: Cell, run: int) -> RngStream:
    return cell_stream(config, cell).child(_CV, run)


@dataclass
class SimulatedTrial:
    """Raw draw for one trial: matrix, truth, measurements, pool diagnostics."""

    pm: object
    truth: GroundTruth
    y: np.ndarray
    pooling_warnings: int


def simulate_trial(
    config: ExperimentConfig, cell: Cell, stream: RngStream, scale: float = 1.0
) -> SimulatedTrial:
    pm = generate_pooling_matrix(cell.n, config.p, cell.q, stream.child(_MATRIX))
    spec = SignalSpec(
        p=config.p,
        f_s=cell.f_s,
        hi_range=(1.0 * scale, 1000.0 * scale),
        lo_range=(0.0, 0.2 * scale),
    )
    truth = generate_signal(spec, stream.child(_SIGNAL))
    noise = NoiseParams(sigma=cell.sigma, q_a=config.q_a)
    measure = measure_exact if config.noise_model == "exact" else measure_linearized
    y = measure(pm, truth.x_star, noise, stream.child(_NOISE))
    return SimulatedTrial(
        pm=pm, truth=truth, y=y, pooling_warnings=validate_pooling(pm).warning_count
    )


def build_weight_sets(config: ExperimentConfig, cell: Cell, sim: SimulatedTrial) -> dict:
    """Weight sets for every configured estimator; raises AssumptionError."""
    noise = NoiseParams(sigma=cell.sigma, q_a=config.q_a)
    params = WeightParams(n=cell.n, p=config.p, q=cell.q, noise=noise)
    weight_sets = {}
    dm = direction_matrices(sim.pm)
    if "lasso" in config.estimators:
        weight_sets["lasso"] = uniform_weight(
            sim.pm, sim.y, params, force=config.force_assumptions, directions=dm
        )
    if "wlasso" in config.estimators:
        weight_sets["wlasso"] = per_coordinate_weights(
            sim.pm, sim.y, params, force=config.force_assumptions, directions=dm
        )
    return weight_sets


@dataclass
class _TrialData:
    truth: GroundTruth
    a_tilde: np.ndarray
    y_tilde: np.ndarray
    lipschitz: float
    grad_truth: np.ndarray
    weight_sets: dict
    pooling_warnings: int
    skip_reason: str | None = None


def _prepare_trial(
    config: ExperimentConfig, cell: Cell, stream: RngStream, scale: float = 1.0
) -> _TrialData:
    sim = simulate_trial(config, cell, stream, scale=scale)
    try:
        weight_sets = build_weight_sets(config, cell, sim)
    except AssumptionError as exc:
        return _TrialData(
            truth=sim.truth,
            a_tilde=np.empty((0, 0)),
            y_tilde=np.empty(0),
            lipschitz=0.0,
            grad_truth=np.empty(0),
            weight_sets={},
            pooling_warnings=sim.pooling_warnings,
            skip_reason=str(exc),
        )
    a_tilde = surrogate_matrix(sim.pm)
    y_tilde = surrogate_measurements(sim.y, sim.pm.n, sim.pm.q)
    lipschitz = 2.0 * spectral_norm_sq(a_tilde, tol=1e-10)
    grad_truth = gradient_at_truth(a_tilde, y_tilde, sim.truth.x_star)
    return _TrialData(
        truth=sim.truth,
        a_tilde=a_tilde,
        y_tilde=y_tilde,
        lipschitz=lipschitz,
        grad_truth=grad_truth,
        weight_sets=weight_sets,
        pooling_warnings=sim.pooling_warnings,
    )


def _solver_config(config: ExperimentConfig, data: _TrialData) -> SolverConfig:
    # the optimality tolerance follows the data scale so that rescaled signals
    # traverse bit-identical iterate sequences
    scale = max(1.0, float(np.abs(data.y_tilde).max()))
    return SolverConfig(tol_kkt=1e-8 * scale, lipschitz=data.lipschitz)


def _c1_violated(data: _TrialData, estimator: str) -> bool:
    ws = data.weight_sets[estimator]
    g = np.abs(data.grad_truth)
    if ws.kind == "uniform":
        return bool(g.max() > ws.beta)
    return bool((g > ws.beta_k).any())


def run_trial(
    config: ExperimentConfig,
    cell: Cell,
    trial_index: int,
    gamma: float | Mapping[str, float],
    scale: float = 1.0,
) -> list[TrialRecord] | TrialSkipped:
    """One fully deterministic simulation trial; returns one record per estimator.

    Assumption failures (without the force flag) skip the trial with a reason
    instead of raising.
    """
    stream = trial_stream(config, cell, trial_index)
    data = _prepare_trial(config, cell, stream, scale=scale)
    if data.skip_reason is not None:
        return TrialSkipped(trial_index=trial_index, cell=cell, reason=data.skip_reason)
    solver_cfg = _solver_config(config, data)
    threshold = config.threshold * scale
    truth_labels = classify(data.truth.x_star, threshold)
    l1_true = float(np.abs(data.truth.x_star).sum())
    records = []
    for estimator in config.estimators:
        g = float(gamma[estimator]) if isinstance(gamma, Mapping) else float(gamma)
        ws = data.weight_sets[estimator]
        problem = LassoProblem(data.a_tilde, data.y_tilde, ws, g)
        result = solve(problem, solver_cfg)
        conf = confusion(truth_labels, classify(result.x_hat, threshold))
        records.append(
            TrialRecord(
                trial_index=trial_index,
                n=cell.n,
                p=config.p,
                q=cell.q,
                f_s=cell.f_s,
                sigma=cell.sigma,
                q_a=config.q_a,
                estimator=estimator,
                gamma=g,
                rrmse=rrmse(data.truth.x_star, result.x_hat),
                sensitivity=sensitivity(conf),
                specificity=specificity(conf),
                lambda_hat=ws.lambda_hat,
                l1_norm_true=l1_true,
                c1_violated=_c1_violated(data, estimator),
                pooling_warnings=data.pooling_warnings,
                solver_iterations=result.iterations,
                converged=result.converged,
                noise_model=config.noise_model,
            )
        )
    return records


def cross_validate_gamma(config: ExperimentConfig, cell: Cell) -> CrossValResult:
    """Pick gamma per estimator by mean RRMSE over cv_runs preliminary trials.

    The preliminary streams are disjoint from the main trial streams. Ties
    break toward the smaller gamma. Raises ConfigError if every preliminary
    run was skipped.
    """
    grid = tuple(sorted(config.gamma_grid))
    if len(grid) == 1:
        return CrossValResult(
            gamma={est: grid[0] for est in config.estimators},
            grid=grid,
            mean_rrmse={est: np.full(1, np.nan) for est in config.estimators},
            runs_used=0,
        )
    sums = {est: np.zeros(len(grid)) for est in config.estimators}
    runs_used = 0
    for run in range(config.cv_runs):
        data = _prepare_trial(config, cell, cv_stream(config, cell, run))
        if data.skip_reason is not None:
            continue
        runs_used += 1
        solver_cfg = _solver_config(config, data)
        for est in config.estimators:
            ws = data.weight_sets[est]
            warm = None
            # solve the path from the sparsest (largest gamma) end, warm-starting
            for gi in range(len(grid) - 1, -1, -1):
                problem = LassoProblem(data.a_tilde, data.y_tilde, ws, grid[gi])
                result = solve(problem, solver_cfg, x0=warm)
                warm = result.x_hat
                sums[est][gi] += rrmse(data.truth.x_star, result.x_hat)
    if runs_used == 0:
        raise ConfigError(
            f"all {config.cv_runs} preliminary runs were skipped for cell {cell}"
        )
    means = {est: sums[est] / runs_used for est in config.estimators}
    chosen = {est: grid[int(np.argmin(means[est]))] for est in config.estimators}
    return CrossValResult(gamma=chosen, grid=grid, mean_rrmse=means, runs_used=runs_used)


def _cv_task(args):
    config, cell = args
    try:
        return cell, cross_validate_gamma(config, cell).gamma, None
    except ConfigError as exc:
        return cell, None, str(exc)


def _trial_task(args):
    config, cell, index, gamma = args
    return run_trial(config, cell, index, gamma)


def _mean_std(values: list[float]) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
    return mean, std


def _aggregate(
    config: ExperimentConfig,
    cell: Cell,
    estimator: str,
    gamma: float,
    recs: list[TrialRecord],
    n_skipped: int,
) -> CellAggregate:
    rr_mean, rr_std = _mean_std([r.rrmse for r in recs])
    se_mean, se_std = _mean_std([r.sensitivity for r in recs])
    sp_mean, sp_std = _mean_std([r.specificity for r in recs])
    return CellAggregate(
        n=cell.n,
        p=config.p,
        q=cell.q,
        f_s=cell.f_s,
        sigma=cell.sigma,
        q_a=config.q_a,
        estimator=estimator,
        gamma=gamma,
        n_trials=len(recs),
        n_skipped=n_skipped,
        rrmse_mean=rr_mean,
        rrmse_std=rr_std,
        sensitivity_mean=se_mean,
        sensitivity_std=se_std,
        specificity_mean=sp_mean,
        specificity_std=sp_std,
        noise_model=config.noise_model,
    )


def run_sweep(config: ExperimentConfig, out_dir=None, jobs: int | None = 1) -> SweepResult:
    """Cross-validate gamma and run all trials for every cell in the grid.

    Emits trials.csv (one row per trial and estimator) and cells.csv
    (per-cell aggregates) into out_dir when given. Cell failures are recorded
    and the sweep continues. jobs > 1 distributes work across processes;
    results are identical regardless of schedule.
    """
    if jobs is None:
        jobs = os.cpu_count() or 1
    cells = config_cells(config)

    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cv_out = list(pool.map(_cv_task, [(config, c) for c in cells]))
    else:
        cv_out = [_cv_task((config, c)) for c in cells]

    gamma_by_cell: dict[tuple[Cell, str], float] = {}
    failed_cells: list[tuple[Cell, str]] = []
    runnable: list[Cell] = []
    for cell, gamma, err in cv_out:
        if err is not None:
            failed_cells.append((cell, err))
            continue
        runnable.append(cell)
        for est, g in gamma.items():
            gamma_by_cell[(cell, est)] = g

    tasks = [
        (config, cell, idx, {est: gamma_by_cell[(cell, est)] for est in config.estimators})
        for cell in runnable
        for idx in range(config.trials)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_trial_task, tasks, chunksize=1))
    else:
        outcomes = [_trial_task(t) for t in tasks]

    records: list[TrialRecord] = []
    skipped: list[TrialSkipped] = []
    for out in outcomes:
        if isinstance(out, TrialSkipped):
            skipped.append(out)
        else:
            records.extend(out)

    aggregates = []
    for cell in runnable:
        cell_skips = sum(1 for s in skipped if s.cell == cell)
        for est in config.estimators:
            recs = [
                r
                for r in records
                if r.estimator == est
                and (r.n, r.f_s, r.q, r.sigma) == (cell.n, cell.f_s, cell.q, cell.sigma)
            ]
            aggregates.append(
                _aggregate(config, cell, est, gamma_by_cell[(cell, est)], recs, cell_skips)
            )

    result = SweepResult(
        records=records,
        skipped=skipped,
        aggregates=aggregates,
        gamma_by_cell=gamma_by_cell,
        failed_cells=failed_cells,
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        emit_csv(records, os.path.join(out_dir, "trials.csv"))
        emit_aggregate_csv(aggregates, os.path.join(out_dir, "cells.csv"))
    return result


def _csv_token(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(records: list[TrialRecord], path) -> None:
    """UTF-8 CSV, exact header, shortest round-trip floats, NA for undefined."""
    lines = [",".join(TRIAL_FIELDS)]
    for rec in records:
        lines.append(",".join(_csv_token(getattr(rec, f)) for f in TRIAL_FIELDS))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_aggregate_csv(aggregates: list[CellAggregate], path) -> None:
    lines = [",".join(AGGREGATE_FIELDS)]
    for agg in aggregates:
        lines.append(",".join(_csv_token(getattr(agg, f)) for f in AGGREGATE_FIELDS))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
