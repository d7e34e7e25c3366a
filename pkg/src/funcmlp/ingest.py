"""Readers and writers for every on-disk format.

CSV carries bulk numbers (curves, coordinates, targets, results); JSON
carries structured documents (models, bases, experiment configs). Floats are
written with 17 significant digits so every float64 survives a round trip.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .basis import BasisSystem, basis_from_dict
from .datagen import FunctionalDistribution, TargetFunctional
from .errors import ConfigError, OrderingError, ParseError, ValidationError
from .fmlp import FmlpModel, TrainConfig
from .projection import CoordinateVector, SampledFunction

EXPERIMENT_KINDS = ("approx", "consistency", "schedule")

RESULTS_HEADER = ["run_id", "config_hash", "param_p", "param_L", "param_n",
                  "metric", "value", "se", "wall_ms"]


def fmt(x: float) -> str:
    """Round-trip float formatting."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _parse_float(text: str, line: int, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"cannot parse {what} {text!r} as a number", line) from None


def _open_write(path):
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _read_rows(path, header: list[str] | None):
    """Yield (line_number, fields) for data rows after checking the header."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ParseError("file is empty", 1) from None
        first = [h.strip() for h in first]
        if header is not None and first != header:
            raise ParseError(f"expected header {','.join(header)}, got {','.join(first)}", 1)
        yield 1, first
        for fields in reader:
            if not fields or all(not f.strip() for f in fields):
                continue
            yield reader.line_num, [f.strip() for f in fields]


# -- curves ---------------------------------------------------------------

def load_curves(path) -> list[SampledFunction]:
    """Curves from an ``id,x,value`` CSV; rows of one id must be contiguous."""
    rows = _read_rows(path, ["id", "x", "value"])
    next(rows)
    groups: dict[str, tuple[list[float], list[float]]] = {}
    last_id = None
    for line, fields in rows:
        if len(fields) != 3:
            raise ParseError(f"expected 3 fields, got {len(fields)}", line)
        cid = fields[0]
        x = _parse_float(fields[1], line, "x")
        v = _parse_float(fields[2], line, "value")
        if cid != last_id and cid in groups:
            raise OrderingError(f"rows of curve {cid!r} are not contiguous (line {line})")
        xs, vs = groups.setdefault(cid, ([], []))
        if xs and x <= xs[-1]:
            raise OrderingError(f"curve {cid!r}: x not strictly increasing at line {line}")
        xs.append(x)
        vs.append(v)
        last_id = cid
    return [SampledFunction(np.array(xs), np.array(vs), id=cid) for cid, (xs, vs) in groups.items()]


def save_curves(curves: Iterable[SampledFunction], path) -> None:
    with _open_write(path) as fh:
        fh.write("id,x,value\n")
        for f in curves:
            for x, v in zip(f.xs, f.values):
                fh.write(f"{f.id},{fmt(x)},{fmt(v)}\n")


# -- coordinates and targets ------------------------------------------------

def save_coords(ids: Iterable[str], coords: np.ndarray, path) -> None:
    coords = np.atleast_2d(coords)
    with _open_write(path) as fh:
        fh.write(",".join(["id"] + [f"c{k}" for k in range(1, coords.shape[1] + 1)]) + "\n")
        for cid, row in zip(ids, coords):
            fh.write(",".join([str(cid)] + [fmt(v) for v in row]) + "\n")


def load_coords(path) -> tuple[list[str], np.ndarray]:
    rows = _read_rows(path, None)
    _, header = next(rows)
    p = len(header) - 1
    if p < 1 or header[0] != "id" or header[1:] != [f"c{k}" for k in range(1, p + 1)]:
        raise ParseError("expected header id,c1,...,cp", 1)
    ids, out = [], []
    for line, fields in rows:
        if len(fields) != p + 1:
            raise ParseError(f"expected {p + 1} fields, got {len(fields)}", line)
        ids.append(fields[0])
        out.append([_parse_float(f, line, "coordinate") for f in fields[1:]])
    return ids, np.array(out, dtype=np.float64).reshape(len(ids), p)


def coordinate_vectors(ids, coords, basis_id: str) -> dict[str, CoordinateVector]:
    return {cid: CoordinateVector(row, basis_id) for cid, row in zip(ids, coords)}


def save_targets(ids: Iterable[str], y, path) -> None:
    with _open_write(path) as fh:
        fh.write("id,y\n")
        for cid, v in zip(ids, y):
            fh.write(f"{cid},{fmt(v)}\n")


def load_targets(path) -> tuple[list[str], np.ndarray]:
    rows = _read_rows(path, ["id", "y"])
    next(rows)
    ids, ys = [], []
    for line, fields in rows:
        if len(fields) != 2:
            raise ParseError(f"expected 2 fields, got {len(fields)}", line)
        ids.append(fields[0])
        ys.append(_parse_float(fields[1], line, "y"))
    return ids, np.array(ys, dtype=np.float64)


# -- JSON documents ----------------------------------------------------------

def save_model(model: FmlpModel, path) -> None:
    with _open_write(path) as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path) -> FmlpModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return FmlpModel.from_dict(doc)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"{path}: not a valid model document ({exc})") from exc


def save_basis(basis: BasisSystem, path) -> None:
    with _open_write(path) as fh:
        fh.write(basis.to_json() + "\n")


def load_basis(path) -> BasisSystem:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return basis_from_dict(doc)


# -- results -----------------------------------------------------------------

@dataclass
class ResultRow:
    run_id: str
    config_hash: str
    param_p: int | None
    param_L: int | None
    param_n: int | None
    metric: str
    value: float
    se: float = float("nan")
    wall_ms: float = 0.0

    def fields(self) -> list[str]:
        opt = lambda v: "" if v is None else str(int(v))  # noqa: E731
        return [self.run_id, self.config_hash, opt(self.param_p), opt(self.param_L),
                opt(self.param_n), self.metric, fmt(self.value), fmt(self.se),
                fmt(self.wall_ms)]


@dataclass
class ResultsTable:
    rows: list[ResultRow] = field(default_factory=list)

    def append(self, row: ResultRow) -> None:
        self.rows.append(row)

    def extend(self, rows: Iterable[ResultRow]) -> None:
        self.rows.extend(rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def select(self, metric: str) -> list[ResultRow]:
        return [r for r in self.rows if r.metric == metric]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(RESULTS_HEADER) + "\n")
        for row in self.rows:
            buf.write(",".join(row.fields()) + "\n")
        return buf.getvalue()


def save_results(table: ResultsTable, path) -> None:
    with _open_write(path) as fh:
        fh.write(table.to_csv())


def load_results(path) -> ResultsTable:
    rows = _read_rows(path, RESULTS_HEADER)
    next(rows)
    table = ResultsTable()
    opt = lambda s: None if s == "" else int(s)  # noqa: E731
    for line, f in rows:
        if len(f) != len(RESULTS_HEADER):
            raise ParseError(f"expected {len(RESULTS_HEADER)} fields, got {len(f)}", line)
        try:
            table.append(ResultRow(f[0], f[1], opt(f[2]), opt(f[3]), opt(f[4]), f[5],
                                   float(f[6]), float(f[7]), float(f[8])))
        except ValueError as exc:
            raise ParseError(str(exc), line) from None
    return table


# -- experiment configs -------------------------------------------------------

DEFAULT_TARGETS = {
    "approx": {"kind": "sqnorm"},
    "consistency": {"kind": "sine", "w": [0.5, 1.0, -1.0, 0.5, 0.5], "scale": 2.0},
    "schedule": {"kind": "sqnorm"},
}

_TOP_KEYS = {"kind", "distribution", "basis", "grid", "train", "out", "seed", "seeds",
             "n_train", "n_test", "alpha", "projection", "workers", "pairing"}
_DIST_KEYS = {"K_max", "s", "noise_sd", "target", "seed", "radius"}
_TARGET_KEYS = {"kind", "w", "scale"}
_GRID_KEYS = {"p", "L", "n"}
_TRAIN_KEYS = {"restarts", "max_iters", "method", "step", "seed", "tolerance", "patience",
               "damping"}
_PROJ_KEYS = {"kind", "m", "grid_kind", "ridge"}


@dataclass
class ExperimentConfig:
    kind: str
    distribution: FunctionalDistribution
    basis: dict
    grid_p: list[int]
    grid_L: list[int]
    grid_n: list[int]
    train: TrainConfig
    out: str
    seed: int
    seeds: list[int]
    n_train: int
    n_test: int
    alpha: float
    projection: dict
    workers: int
    pairing: str
    raw: dict

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True,
                      allow_nan=False)


def config_hash(doc: dict) -> str:
    return hashlib.sha256(canonical_json(doc).encode("ascii")).hexdigest()[:16]


def _defaults(kind: str) -> dict:
    doc = {
        "kind": kind,
        "distribution": {"K_max": 25, "s": 1.5, "noise_sd": 0.2,
                         "target": copy.deepcopy(DEFAULT_TARGETS.get(kind, {"kind": "sqnorm"})),
                         "seed": 0},
        "basis": {"family": "fourier"},
        "grid": {"p": [5], "L": [], "n": [100, 400, 1600, 6400]},
        "train": {"restarts": 20, "max_iters": 2000, "method": "lm", "step": 0.5, "seed": 0,
                  "tolerance": 1e-10, "patience": 50, "damping": 1e-3},
        "out": "results",
        "seed": 0,
        "seeds": [0],
        "n_train": 2000,
        "n_test": 100000,
        "alpha": 100.0,
        "projection": {"kind": "exact", "m": None, "grid_kind": "uniform", "ridge": 0.0},
        "workers": 1,
        "pairing": "diagonal",
    }
    if kind == "approx":
        doc["distribution"]["noise_sd"] = 0.0
        doc["distribution"]["radius"] = 3.0
        doc["grid"] = {"p": [2, 4, 8], "L": [2, 4, 16], "n": []}
        doc["n_test"] = 500
        doc["n_train"] = 5000
    if kind == "consistency":
        doc["seeds"] = [0, 1, 2, 3, 4]
    if kind == "schedule":
        doc["grid"] = {"p": [], "L": [], "n": [10**k for k in range(2, 10)]}
    return doc


def _unknown(section: dict, allowed: set, where: str) -> list[str]:
    return [f"unknown key {where}{k!r}" for k in sorted(set(section) - allowed)]


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "target":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config document, apply defaults, reject unknown keys."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    problems = _unknown(doc, _TOP_KEYS, "")
    for key, allowed in (("distribution", _DIST_KEYS), ("grid", _GRID_KEYS),
                         ("train", _TRAIN_KEYS), ("projection", _PROJ_KEYS)):
        section = doc.get(key, {})
        if not isinstance(section, dict):
            problems.append(f"{key} must be an object")
            continue
        problems += _unknown(section, allowed, f"{key}.")
    target = doc.get("distribution", {}).get("target", {}) if isinstance(doc.get("distribution"), dict) else {}
    if isinstance(target, dict):
        problems += _unknown(target, _TARGET_KEYS, "distribution.target.")
    kind = doc.get("kind")
    if kind not in EXPERIMENT_KINDS:
        problems.append(f"kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    if problems:
        raise ConfigError(problems)

    full = _merge(_defaults(kind), doc)
    grid = full["grid"]
    for axis in ("p", "L", "n"):
        vals = grid[axis]
        if not isinstance(vals, list) or not all(isinstance(v, int) and v > 0 for v in vals):
            problems.append(f"grid.{axis} must be a list of positive integers")
        elif vals != sorted(vals):
            problems.append(f"grid.{axis} must be sorted ascending")
    if full["pairing"] not in ("diagonal", "product"):
        problems.append("pairing must be 'diagonal' or 'product'")
    elif kind == "approx" and full["pairing"] == "diagonal" and len(grid["p"]) != len(grid["L"]):
        problems.append("approx sweeps need grid.p and grid.L of equal length (diagonal)")
    if kind == "consistency" and len(grid["p"]) < 1:
        problems.append("consistency sweeps need at least one p")
    for key in ("n_train", "n_test", "workers"):
        if not isinstance(full[key], int) or full[key] < 1:
            problems.append(f"{key} must be a positive integer")
    if not isinstance(full["seeds"], list) or not full["seeds"]:
        problems.append("seeds must be a non-empty list of integers")
    if not isinstance(full["alpha"], (int, float)) or not full["alpha"] > 0:
        problems.append("alpha must be positive")
    if problems:
        raise ConfigError(problems)

    dd = full["distribution"]
    try:
        t = dd["target"]
        target = TargetFunctional(t.get("kind"), tuple(t.get("w", ())), float(t.get("scale", 1.0)))
        dist = FunctionalDistribution(
            K_max=int(dd["K_max"]), s=float(dd["s"]), noise_sd=float(dd["noise_sd"]),
            target=target, seed=int(dd["seed"]),
            radius=None if dd.get("radius") is None else float(dd["radius"]),
        )
        train = TrainConfig(**full["train"])
        if full["basis"].get("family") not in ("fourier", "bspline"):
            raise ValidationError(f"unknown basis family {full['basis'].get('family')!r}")
        if full["projection"]["kind"] not in ("exact", "sampled"):
            raise ValidationError("projection.kind must be 'exact' or 'sampled'")
    except (ValidationError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    return ExperimentConfig(
        kind=kind, distribution=dist, basis=full["basis"],
        grid_p=grid["p"], grid_L=grid["L"], grid_n=grid["n"], train=train,
        out=full["out"], seed=int(full["seed"]), seeds=[int(s) for s in full["seeds"]],
        n_train=full["n_train"], n_test=full["n_test"], alpha=float(full["alpha"]),
        projection=full["projection"], workers=full["workers"], pairing=full["pairing"],
        raw=full,
    )


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc)


def save_config(cfg: ExperimentConfig, path) -> None:
    with _open_write(path) as fh:
        fh.write(json.dumps(cfg.raw, sort_keys=True, indent=1) + "\n")


def distribution_from_dict(doc: dict) -> FunctionalDistribution:
    cfg = parse_config({"kind": "consistency", "distribution": doc})
    return cfg.distribution
