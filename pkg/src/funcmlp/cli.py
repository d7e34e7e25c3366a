"""Command-line entry point (``funcmlp``).

Exit codes: 0 success, 1 validation or config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import harness, ingest
from .basis import make_fourier_basis
from .datagen import ProjectionMode, make_dataset, sampled_curves
from .errors import NumericalError, ValidationError
from .fmlp import CoordDataset, TrainConfig, schedule, train
from .projection import project_sampled

log = logging.getLogger("funcmlp")


def _common(p: argparse.ArgumentParser, config_required: bool = False) -> None:
    p.add_argument("--config", required=config_required, help="experiment config (JSON)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override the seed (single-member ensemble)")
    p.add_argument("--workers", type=int, help="worker processes for sweep cells")


def _train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--method", choices=["lm", "gd"])
    p.add_argument("--step", type=float)
    p.add_argument("--tolerance", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="funcmlp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate curves, coordinates and targets")
    _common(p)
    p.add_argument("--n", type=int, default=100, help="number of curves")
    p.add_argument("--p", type=int, help="projection dimension (default: first grid p)")
    p.add_argument("--m", type=int, default=101, help="observations per written curve")
    p.add_argument("--stream", default="train")

    p = sub.add_parser("project", help="least-squares coordinates of sampled curves")
    _common(p)
    p.add_argument("--curves", required=True, help="id,x,value CSV")
    p.add_argument("--basis", help="basis JSON (default: Fourier of dimension --p)")
    p.add_argument("--p", type=int, default=5)
    p.add_argument("--ridge", type=float, default=0.0)

    p = sub.add_parser("train", help="fit an FMLP to coordinates and targets")
    _common(p)
    p.add_argument("--coords", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--L", type=int, help="hidden units (default: schedule(n))")
    p.add_argument("--alpha", type=float, help="output-weight L1 budget (default: schedule(n))")
    _train_flags(p)

    p = sub.add_parser("predict", help="evaluate a saved model on coordinates")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--coords", required=True)

    p = sub.add_parser("exp-approx", help="universal-approximation sweep")
    _common(p, config_required=True)

    p = sub.add_parser("exp-consistency", help="consistency sweep")
    _common(p, config_required=True)

    p = sub.add_parser("check-schedule", help="tabulate the (L_n, alpha_n) schedule")
    _common(p)
    p.add_argument("--n-grid", help="comma-separated n values")
    return parser


def _load_cfg(args, kind: str | None) -> ingest.ExperimentConfig:
    """Config from --config (or defaults for ``kind``) with CLI overrides."""
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    else:
        doc = {"kind": kind or "consistency"}
    if args.seed is not None:
        doc["seed"] = args.seed
        doc["seeds"] = [args.seed]
        doc.setdefault("distribution", {})["seed"] = args.seed
    if args.workers is not None:
        doc["workers"] = args.workers
    if args.out is not None:
        doc["out"] = args.out
    cfg = ingest.parse_config(doc)
    if kind is not None and cfg.kind != kind:
        raise ValidationError(f"config kind is {cfg.kind!r}, this command needs {kind!r}")
    return cfg


def _out_dir(args, default: str = ".") -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args, None)
    p = args.p or (cfg.grid_p[0] if cfg.grid_p else 5)
    dist = cfg.distribution
    data, ref = make_dataset(dist, args.n, ProjectionMode.exact(p), args.stream)
    out = _out_dir(args)
    ids = [str(i) for i in range(args.n)]
    grid = ProjectionMode.sampled(1, args.m)
    ingest.save_curves(sampled_curves(dist, ref.coeffs, grid, args.stream), out / "curves.csv")
    ingest.save_coords(ids, data.inputs, out / "coords.csv")
    ingest.save_targets(ids, ref.y, out / "targets.csv")
    ingest.save_targets(ids, ref.clean, out / "targets_clean.csv")
    meta = {"distribution": dist.to_dict(), "p": p, "n": args.n, "m": args.m,
            "stream": args.stream, "basis": make_fourier_basis(p).to_dict()}
    (out / "dataset-meta.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {args.n} curves to {out}")
    return 0


def cmd_project(args) -> int:
    basis = ingest.load_basis(args.basis) if args.basis else make_fourier_basis(args.p)
    curves = ingest.load_curves(args.curves)
    coords = np.vstack([project_sampled(f, basis, args.ridge).coords for f in curves])
    out = _out_dir(args)
    ingest.save_coords([f.id for f in curves], coords, out / "coords.csv")
    print(f"projected {len(curves)} curves onto {basis.id}")
    return 0


def _align(ids_x, X, ids_y, y):
    pos = {cid: i for i, cid in enumerate(ids_y)}
    missing = [cid for cid in ids_x if cid not in pos]
    if missing:
        raise ValidationError(f"no target for ids {missing[:5]}")
    return X, y[[pos[cid] for cid in ids_x]]


def cmd_train(args) -> int:
    ids, X = ingest.load_coords(args.coords)
    tids, y = ingest.load_targets(args.targets)
    X, y = _align(ids, X, tids, y)
    data = CoordDataset(X, y, {"coords": str(args.coords)})
    sched = schedule(data.n)
    L = args.L or sched.L_n
    alpha = args.alpha or sched.alpha_n
    tcfg = _load_cfg(args, None).train if args.config else TrainConfig()
    overrides = {k: v for k, v in {
        "restarts": args.restarts, "max_iters": args.max_iters, "method": args.method,
        "step": args.step, "tolerance": args.tolerance, "seed": args.seed,
        "workers": args.workers}.items() if v is not None}
    tcfg = dataclasses.replace(tcfg, **overrides)
    model, report = train(data, L, alpha, tcfg)
    out = _out_dir(args)
    ingest.save_model(model, out / "model.json")
    print(f"L={L} alpha={alpha:.6g} restarts={tcfg.restarts} "
          f"best={report.best_restart} train_rmse={report.final_rmse:.6g}")
    return 0


def cmd_predict(args) -> int:
    model = ingest.load_model(args.model)
    ids, X = ingest.load_coords(args.coords)
    out = _out_dir(args)
    ingest.save_targets(ids, model.predict(X), out / "predictions.csv")
    print(f"wrote {len(ids)} predictions")
    return 0


def _report_table(table, metric: str) -> None:
    for row in table.select(metric):
        se = "" if row.se != row.se else f" +/- {row.se:.2g}"
        print(f"{row.run_id} p={row.param_p} L={row.param_L} n={row.param_n} "
              f"{metric}={row.value:.6g}{se}")


def cmd_exp_approx(args) -> int:
    started = time.time()
    cfg = _load_cfg(args, "approx")
    result = harness.run_approx_sweep(cfg)
    path = harness.write_outputs(result.table, cfg.out, cfg.hash, cfg.raw, started)
    _report_table(result.table, "sup_error")
    print(f"results: {path}")
    return 0


def cmd_exp_consistency(args) -> int:
    started = time.time()
    cfg = _load_cfg(args, "consistency")
    result = harness.run_consistency_sweep(cfg)
    path = harness.write_outputs(result.table, cfg.out, cfg.hash, cfg.raw, started)
    _report_table(result.table, "gap")
    print(f"results: {path}")
    return 0


def cmd_check_schedule(args) -> int:
    started = time.time()
    cfg = _load_cfg(args, "schedule")
    grid = cfg.grid_n
    if args.n_grid:
        try:
            grid = [int(v) for v in args.n_grid.split(",") if v.strip()]
        except ValueError:
            raise ValidationError(f"cannot parse --n-grid {args.n_grid!r}") from None
    check = harness.run_schedule_check(grid, cfg.hash)
    for r in check.rows:
        print(f"n={r.n} L_n={r.L_n} alpha_n={r.alpha_n:.6f} "
              f"h3={r.h3_complexity:.6g} alpha4/n^0.75={r.h3_weights:.6g}")
    if check.violations:
        print("violations: " + ", ".join(check.violations))
    if args.out or args.config:
        harness.write_outputs(check.table, cfg.out, cfg.hash, cfg.raw, started)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "project": cmd_project,
    "train": cmd_train,
    "predict": cmd_predict,
    "exp-approx": cmd_exp_approx,
    "exp-consistency": cmd_exp_consistency,
    "check-schedule": cmd_check_schedule,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
