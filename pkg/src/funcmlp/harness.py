"""Experiment drivers: approximation sweep, consistency sweep, schedule check.

Every sweep is split into independent cells. Cells may run in a process
pool, but results are collected in cell order so the output table does not
depend on completion order. A cell that fails is recorded as a ``failed``
row instead of aborting the sweep.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .basis import basis_from_dict
from .datagen import (
    ConditionalExpectation,
    FunctionalDistribution,
    ProjectionMode,
    draw_coefficients,
    estimate_risk,
    eval_target,
    make_dataset,
    project_coefficients,
)
from .errors import DimensionError, FuncMLPError, OrderingError, ValidationError
from .fmlp import h3_diagnostics, schedule, train
from .ingest import ExperimentConfig, ResultRow, ResultsTable, save_results

log = logging.getLogger(__name__)

APPROX_TRAIN_STREAM = "approx/train"
APPROX_TEST_STREAM = "approx/test"
CONSISTENCY_TEST_STREAM = "consistency/test"


def consistency_train_stream(n: int) -> str:
    return f"consistency/train/n={n}"


@dataclass
class ApproxCell:
    seed: int
    p: int
    L: int
    sup_error: float = float("nan")
    rmse: float = float("nan")
    train_loss: float = float("nan")
    oracle_rmse: float | None = None
    wall_ms: float = 0.0
    error: str | None = None


@dataclass
class ApproxSweepResult:
    cells: list[ApproxCell]
    table: ResultsTable
    config_hash: str

    def sup_errors(self, seed: int | None = None) -> list[float]:
        return [c.sup_error for c in self.cells if seed is None or c.seed == seed]


@dataclass
class ConsistencyCell:
    seed: int
    p: int
    n: int
    L_n: int = 0
    alpha_n: float = float("nan")
    risk: float = float("nan")
    se: float = float("nan")
    gap: float = float("nan")
    train_rmse: float = float("nan")
    wall_ms: float = 0.0
    error: str | None = None


@dataclass
class ConsistencySweepResult:
    cells: list[ConsistencyCell]
    table: ResultsTable
    config_hash: str
    c_star: float

    def path(self, seed: int, p: int | None = None) -> list[ConsistencyCell]:
        return [c for c in self.cells if c.seed == seed and (p is None or c.p == p)]


@dataclass
class ScheduleRow:
    n: int
    L_n: int
    alpha_n: float
    h3_complexity: float
    h3_weights: float


@dataclass
class ScheduleCheck:
    rows: list[ScheduleRow]
    violations: list[str] = field(default_factory=list)
    table: ResultsTable = field(default_factory=ResultsTable)


def _projection_mode(cfg: ExperimentConfig, p: int) -> ProjectionMode:
    basis = None
    if cfg.basis.get("family") == "bspline":
        basis = basis_from_dict(cfg.basis)
        if basis.p != p:
            raise DimensionError(f"B-spline basis has p={basis.p}, sweep cell asks for p={p}")
    proj = cfg.projection
    if proj.get("kind", "exact") == "sampled":
        return ProjectionMode.sampled(p, proj["m"], proj.get("grid_kind", "uniform"),
                                      float(proj.get("ridge", 0.0)), basis)
    return ProjectionMode.exact(p, basis)


def _run_id(cfg: ExperimentConfig, seed: int) -> str:
    return f"{cfg.kind}-{cfg.hash[:8]}-seed{seed}"


def _train_cfg(cfg: ExperimentConfig, seed: int):
    return dataclasses.replace(cfg.train, seed=cfg.train.seed + seed, workers=1)


def linear_information_bound(dist: FunctionalDistribution, p: int) -> float | None:
    """RMSE of the best predictor of a linear target from the first p Fourier
    coordinates, ignoring the ball clipping: sqrt(sum_{k>p} w_k^2 sd_k^2)."""
    if dist.target.kind != "linear":
        return None
    w = np.zeros(dist.K_max)
    w[: len(dist.target.w)] = dist.target.w[: dist.K_max]
    var = dist.coefficient_sd**2
    return float(math.sqrt((w[p:] ** 2 * var[p:]).sum() + dist.noise_sd**2))


def _approx_cell(cfg: ExperimentConfig, seed: int, p: int, L: int) -> ApproxCell:
    t0 = time.perf_counter()
    cell = ApproxCell(seed, p, L)
    try:
        dist = dataclasses.replace(cfg.distribution, seed=seed)
        mode = _projection_mode(cfg, p)
        data, _ = make_dataset(dist, cfg.n_train, mode, APPROX_TRAIN_STREAM)
        model, report = train(data, L, cfg.alpha, _train_cfg(cfg, seed))
        idx = range(cfg.n_test)
        coeffs = draw_coefficients(dist, idx, APPROX_TEST_STREAM)
        truth = eval_target(dist.target, coeffs)
        pred = model.predict(project_coefficients(dist, coeffs, mode, APPROX_TEST_STREAM))
        err = np.abs(pred - truth)
        cell.sup_error = float(err.max())
        cell.rmse = float(np.sqrt(np.mean(err**2)))
        cell.train_loss = report.final_loss
        cell.oracle_rmse = linear_information_bound(dist, p)
    except (FuncMLPError, ArithmeticError, ValueError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
        log.warning("approx cell seed=%d p=%d L=%d failed: %s", seed, p, L, exc)
    cell.wall_ms = 1000.0 * (time.perf_counter() - t0)
    return cell


def _approx_rows(cfg: ExperimentConfig, cell: ApproxCell) -> list[ResultRow]:
    base = dict(run_id=_run_id(cfg, cell.seed), config_hash=cfg.hash,
                param_p=cell.p, param_L=cell.L, param_n=cfg.n_train)
    if cell.error is not None:
        return [ResultRow(**base, metric="failed", value=float("nan"), wall_ms=cell.wall_ms)]
    rows = [
        ResultRow(**base, metric="sup_error", value=cell.sup_error, wall_ms=cell.wall_ms),
        ResultRow(**base, metric="rmse", value=cell.rmse, wall_ms=cell.wall_ms),
        ResultRow(**base, metric="train_loss", value=cell.train_loss, wall_ms=cell.wall_ms),
    ]
    if cell.oracle_rmse is not None:
        rows.append(ResultRow(**base, metric="oracle_rmse", value=cell.oracle_rmse,
                              wall_ms=cell.wall_ms))
    return rows


def approx_grid(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    if cfg.pairing == "product":
        return [(p, L) for p in cfg.grid_p for L in cfg.grid_L]
    return list(zip(cfg.grid_p, cfg.grid_L))


def _map(fn, jobs: Sequence[tuple], workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, *zip(*jobs)))
    return [fn(*job) for job in jobs]


def run_approx_sweep(cfg: ExperimentConfig, workers: int | None = None) -> ApproxSweepResult:
    """Train on noiseless pairs from the compact set and measure the sup
    error over ``n_test`` fresh curves, for every (p, L) cell and seed."""
    if cfg.kind != "approx":
        raise ValidationError(f"config kind is {cfg.kind!r}, expected 'approx'")
    jobs = [(cfg, s, p, L) for s in cfg.seeds for p, L in approx_grid(cfg)]
    cells = _map(_approx_cell, jobs, workers or cfg.workers)
    table = ResultsTable()
    for cell in cells:
        table.extend(_approx_rows(cfg, cell))
    return ApproxSweepResult(cells, table, cfg.hash)


def _consistency_cell(cfg: ExperimentConfig, seed: int, p: int, n: int) -> ConsistencyCell:
    t0 = time.perf_counter()
    sched = schedule(n)
    cell = ConsistencyCell(seed, p, n, sched.L_n, sched.alpha_n)
    try:
        dist = dataclasses.replace(cfg.distribution, seed=seed)
        mode = _projection_mode(cfg, p)
        data, _ = make_dataset(dist, n, mode, consistency_train_stream(n))
        model, report = train(data, sched.L_n, sched.alpha_n, _train_cfg(cfg, seed))
        cell.train_rmse = report.final_rmse
        cell.risk, cell.se = estimate_risk(model, dist, cfg.n_test, p, mode,
                                           CONSISTENCY_TEST_STREAM)
        cell.gap = cell.risk - dist.noise_sd
    except (FuncMLPError, ArithmeticError, ValueError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
        log.warning("consistency cell seed=%d p=%d n=%d failed: %s", seed, p, n, exc)
    cell.wall_ms = 1000.0 * (time.perf_counter() - t0)
    return cell


def _consistency_rows(cfg: ExperimentConfig, cell: ConsistencyCell) -> list[ResultRow]:
    base = dict(run_id=_run_id(cfg, cell.seed), config_hash=cfg.hash,
                param_p=cell.p, param_L=cell.L_n, param_n=cell.n)
    w = cell.wall_ms
    if cell.error is not None:
        return [ResultRow(**base, metric="failed", value=float("nan"), wall_ms=w)]
    return [
        ResultRow(**base, metric="alpha_n", value=cell.alpha_n, wall_ms=w),
        ResultRow(**base, metric="risk", value=cell.risk, se=cell.se, wall_ms=w),
        ResultRow(**base, metric="gap", value=cell.gap, se=cell.se, wall_ms=w),
        ResultRow(**base, metric="train_rmse", value=cell.train_rmse, wall_ms=w),
    ]


def run_consistency_sweep(
    cfg: ExperimentConfig, workers: int | None = None
) -> ConsistencySweepResult:
    """For each seed, p and n: fresh training set, scheduled (L_n, alpha_n),
    training, and risk on a test set shared by every n of that seed."""
    if cfg.kind != "consistency":
        raise ValidationError(f"config kind is {cfg.kind!r}, expected 'consistency'")
    jobs = [(cfg, s, p, n) for s in cfg.seeds for p in cfg.grid_p for n in cfg.grid_n]
    cells = _map(_consistency_cell, jobs, workers or cfg.workers)
    table = ResultsTable()
    for cell in cells:
        table.extend(_consistency_rows(cfg, cell))
    return ConsistencySweepResult(cells, table, cfg.hash, cfg.distribution.noise_sd)


def gap_trend_ok(cells: Sequence[ConsistencyCell], ratio: float = 0.5,
                 n_se: float = 2.0) -> bool:
    """Last gap below ``ratio`` times the first, and no step up by more than
    ``n_se`` standard errors."""
    gaps = [c.gap for c in cells]
    if any(not math.isfinite(g) for g in gaps) or len(gaps) < 2:
        return False
    if not gaps[-1] < ratio * gaps[0]:
        return False
    return all(
        b.gap - a.gap <= n_se * max(a.se, b.se) for a, b in zip(cells, cells[1:])
    )


def run_schedule_check(n_grid: Sequence[int], config_hash: str = "") -> ScheduleCheck:
    if list(n_grid) != sorted(n_grid):
        raise OrderingError("n grid must be sorted ascending")
    rows = []
    for n in n_grid:
        s = schedule(n)
        comp, weights = h3_diagnostics(s)
        rows.append(ScheduleRow(s.n, s.L_n, s.alpha_n, comp, weights))
    violations = []
    for name in ("h3_complexity", "h3_weights"):
        seq = [getattr(r, name) for r in rows]
        if len(seq) >= 2 and not seq[-1] < seq[-2]:
            violations.append(name)
    table = ResultsTable()
    for r in rows:
        base = dict(run_id="schedule", config_hash=config_hash, param_p=None,
                    param_L=r.L_n, param_n=r.n)
        table.append(ResultRow(**base, metric="alpha_n", value=r.alpha_n))
        table.append(ResultRow(**base, metric="h3_complexity", value=r.h3_complexity))
        table.append(ResultRow(**base, metric="h3_weights", value=r.h3_weights))
    for name in ("h3_complexity", "h3_weights"):
        table.append(ResultRow("schedule", config_hash, None, None, None,
                               f"violation_{name}", float(name in violations)))
    return ScheduleCheck(rows, violations, table)


def oracle_risk(dist: FunctionalDistribution, n_test: int, stream: str = "oracle"):
    """Estimated risk of E[Y | G]; should match noise_sd."""
    return estimate_risk(ConditionalExpectation(dist), dist, n_test, stream=stream)


def write_outputs(table: ResultsTable, out_dir, cfg_hash: str, raw_config: dict,
                  started: float, name: str = "results.csv") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    save_results(table, path)
    meta = {
        "config_hash": cfg_hash,
        "config": raw_config,
        "versions": {
            "funcmlp": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_seconds": time.time() - started,
        "rows": len(table),
    }
    (out / "run-meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return path


__all__ = [
    "ApproxSweepResult",
    "ConsistencySweepResult",
    "ScheduleCheck",
    "approx_grid",
    "gap_trend_ok",
    "oracle_risk",
    "run_approx_sweep",
    "run_consistency_sweep",
    "run_schedule_check",
    "write_outputs",
]
