"""Synthetic functional regression problems with a known optimum.

Curves are random Fourier expansions

    G = sum_{k <= K_max} xi_k phi_k,   xi_k ~ N(0, k^(-2s)) independently,

optionally rescaled into a Euclidean ball of coefficient vectors. The
response is ``Y = F(G) + eps`` with ``eps ~ N(0, noise_sd^2)`` independent of
``G``, so ``E[Y | G] = F(G)`` and the minimal RMSE is ``noise_sd``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as rngmod
from .basis import BasisSystem, make_fourier_basis, reference_rule
from .errors import BasisMismatchError, EmptyDataError, UnderdeterminedError, ValidationError
from .fmlp import CoordDataset, FmlpModel
from .projection import CoordinateVector, SampledFunction, project_sampled, project_values

TARGET_KINDS = ("linear", "sqnorm", "sine")
GRID_KINDS = ("uniform", "random")

# curves tabulated per chunk when projecting large batches
_CHUNK = 4096


@dataclass(frozen=True)
class TargetFunctional:
    """A continuous functional evaluated through Fourier coefficients.

    ``linear``: sum w_k xi_k (the integral of w * g);
    ``sqnorm``: sum xi_k^2 (the squared L2 norm);
    ``sine``:   sin(scale * sum w_k xi_k).
    """

    kind: str
    w: tuple[float, ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValidationError(f"unknown target kind {self.kind!r}")
        if self.kind in ("linear", "sine") and not self.w:
            raise ValidationError(f"target {self.kind!r} needs a weight vector w")
        object.__setattr__(self, "w", tuple(float(v) for v in self.w))

    def to_dict(self) -> dict:
        doc = {"kind": self.kind}
        if self.kind != "sqnorm":
            doc["w"] = list(self.w)
        if self.kind == "sine":
            doc["scale"] = self.scale
        return doc


def eval_target(t: TargetFunctional, g_coeffs) -> np.ndarray | float:
    """Value of the functional for one coefficient vector or a batch (rows)."""
    if isinstance(g_coeffs, CoordinateVector):
        if not g_coeffs.basis_id.startswith("fourier"):
            raise BasisMismatchError(
                f"target is defined on the Fourier system, got {g_coeffs.basis_id!r}"
            )
        g_coeffs = g_coeffs.coords
    xi = np.asarray(g_coeffs, dtype=np.float64)
    single = xi.ndim == 1
    xi = np.atleast_2d(xi)
    if t.kind == "sqnorm":
        out = np.einsum("ij,ij->i", xi, xi)
    else:
        w = np.asarray(t.w)
        if w.size > xi.shape[1]:
            if np.any(w[xi.shape[1]:] != 0):
                raise BasisMismatchError(
                    f"weight vector has {w.size} coordinates, curves only {xi.shape[1]}"
                )
            w = w[: xi.shape[1]]
        lin = xi[:, : w.size] @ w
        out = lin if t.kind == "linear" else np.sin(t.scale * lin)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class FunctionalDistribution:
    K_max: int = 25
    s: float = 1.5
    noise_sd: float = 0.2
    target: TargetFunctional = field(default_factory=lambda: TargetFunctional("sqnorm"))
    seed: int = 0
    # coefficient vectors longer than this are rescaled onto the sphere
    radius: float | None = None
    # override of k^(-s); used to build degenerate laws in tests
    sds: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.K_max < 1:
            raise ValidationError("K_max must be >= 1")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be nonnegative")
        if self.radius is not None and not self.radius > 0:
            raise ValidationError("radius must be positive")
        if self.sds is not None and len(self.sds) != self.K_max:
            raise ValidationError("sds must have K_max entries")

    @property
    def basis(self) -> BasisSystem:
        return make_fourier_basis(self.K_max)

    @property
    def coefficient_sd(self) -> np.ndarray:
        if self.sds is not None:
            return np.asarray(self.sds, dtype=np.float64)
        return np.arange(1, self.K_max + 1, dtype=np.float64) ** (-self.s)

    def to_dict(self) -> dict:
        doc = {
            "K_max": self.K_max,
            "s": self.s,
            "noise_sd": self.noise_sd,
            "target": self.target.to_dict(),
            "seed": self.seed,
        }
        if self.radius is not None:
            doc["radius"] = self.radius
        return doc


class FourierCurve:
    """Evaluable expansion sum_k coeffs_k phi_k on the Fourier system."""

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=np.float64)
        self._basis = make_fourier_basis(self.coeffs.size)

    def __call__(self, x):
        return self.coeffs @ self._basis(x)


def draw_coefficients(
    dist: FunctionalDistribution, indices: Sequence[int], stream: str = "train"
) -> np.ndarray:
    """Generating coefficients for the given item indices, one row each."""
    sd = dist.coefficient_sd
    out = np.empty((len(indices), dist.K_max))
    for row, i in enumerate(indices):
        gen = rngmod.stream(dist.seed, f"{stream}/curve", int(i))
        out[row] = gen.standard_normal(dist.K_max) * sd
    if dist.radius is not None:
        norms = np.linalg.norm(out, axis=1)
        over = norms > dist.radius
        out[over] *= (dist.radius / norms[over])[:, None]
    return out


def draw_noise(
    dist: FunctionalDistribution, indices: Sequence[int], stream: str = "train"
) -> np.ndarray:
    out = np.empty(len(indices))
    for row, i in enumerate(indices):
        out[row] = rngmod.stream(dist.seed, f"{stream}/noise", int(i)).standard_normal()
    return dist.noise_sd * out


def sample_curve(
    dist: FunctionalDistribution, index: int, stream: str = "train"
) -> tuple[FourierCurve, CoordinateVector]:
    """Curve number ``index`` of the stream and its generating coefficients."""
    if index < 0:
        raise ValidationError("index must be >= 0")
    xi = draw_coefficients(dist, [index], stream)[0]
    return FourierCurve(xi), CoordinateVector(xi, dist.basis.id)


@dataclass(frozen=True)
class ProjectionMode:
    """``exact``: quadrature projection; ``sampled``: least squares from m
    observations on a uniform or random grid."""

    kind: str
    p: int
    m: int | None = None
    grid_kind: str = "uniform"
    ridge: float = 0.0
    basis: BasisSystem | None = None

    def __post_init__(self):
        if self.kind not in ("exact", "sampled"):
            raise ValidationError(f"unknown projection mode {self.kind!r}")
        if self.p < 1:
            raise ValidationError("p must be >= 1")
        if self.kind == "sampled":
            if self.m is None:
                raise ValidationError("sampled projection needs m")
            if self.m < self.p:
                raise UnderdeterminedError(f"m={self.m} < p={self.p}")
            if self.grid_kind not in GRID_KINDS:
                raise ValidationError(f"unknown grid kind {self.grid_kind!r}")
        if self.basis is not None and self.basis.p != self.p:
            raise ValidationError("basis dimension disagrees with p")

    @property
    def projection_basis(self) -> BasisSystem:
        return self.basis if self.basis is not None else make_fourier_basis(self.p)

    @classmethod
    def exact(cls, p: int, basis: BasisSystem | None = None) -> "ProjectionMode":
        return cls("exact", p, basis=basis)

    @classmethod
    def sampled(cls, p: int, m: int, grid_kind: str = "uniform", ridge: float = 0.0,
                basis: BasisSystem | None = None) -> "ProjectionMode":
        return cls("sampled", p, m, grid_kind, ridge, basis)


def sample_grid(mode: ProjectionMode, seed: int, stream: str, index: int) -> np.ndarray:
    if mode.grid_kind == "uniform":
        return np.linspace(0.0, 1.0, mode.m)
    gen = rngmod.stream(seed, f"{stream}/grid", index)
    while True:
        xs = np.unique(gen.uniform(0.0, 1.0, size=mode.m))
        if xs.size == mode.m:
            return xs


def sampled_curves(
    dist: FunctionalDistribution,
    coeffs: np.ndarray,
    mode: ProjectionMode,
    stream: str = "train",
    first_index: int = 0,
) -> list[SampledFunction]:
    """Observe each generated curve on its grid (noise-free)."""
    gen_basis = dist.basis
    out = []
    for row, xi in enumerate(coeffs):
        idx = first_index + row
        xs = sample_grid(mode, dist.seed, stream, idx)
        out.append(SampledFunction(xs, xi @ gen_basis(xs), id=str(idx)))
    return out


def project_coefficients(
    dist: FunctionalDistribution,
    coeffs: np.ndarray,
    mode: ProjectionMode,
    stream: str = "train",
    first_index: int = 0,
) -> np.ndarray:
    """Inputs pi_p(G) for a batch of curves given by generating coefficients."""
    basis = mode.projection_basis
    if mode.kind == "exact":
        rule = reference_rule()
        gen_values = dist.basis(rule.nodes)
        parts = [
            project_values(coeffs[i : i + _CHUNK] @ gen_values, basis, rule)
            for i in range(0, len(coeffs), _CHUNK)
        ]
        return np.vstack(parts) if parts else np.empty((0, basis.p))
    curves = sampled_curves(dist, coeffs, mode, stream, first_index)
    if not curves:
        return np.empty((0, basis.p))
    return np.vstack([project_sampled(f, basis, mode.ridge).coords for f in curves])


@dataclass
class FunctionalDataset:
    """Reference copy of the generated pairs: exact coefficients, noiseless
    targets, noise, and observed responses."""

    coeffs: np.ndarray
    clean: np.ndarray
    noise: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.y.size

    def curves(self) -> list[FourierCurve]:
        return [FourierCurve(xi) for xi in self.coeffs]


def make_dataset(
    dist: FunctionalDistribution, n: int, mode: ProjectionMode, stream: str = "train"
) -> tuple[CoordDataset, FunctionalDataset]:
    """n pairs (pi_p(G^i), Y^i) drawn from ``stream`` items 0..n-1."""
    if int(n) != n or n < 1:
        raise EmptyDataError(f"dataset size must be >= 1, got {n!r}")
    idx = range(int(n))
    coeffs = draw_coefficients(dist, idx, stream)
    clean = eval_target(dist.target, coeffs)
    noise = draw_noise(dist, idx, stream)
    y = clean + noise
    inputs = project_coefficients(dist, coeffs, mode, stream)
    meta = {
        "basis": mode.projection_basis.id,
        "mode": mode.kind,
        "seed": dist.seed,
        "stream": stream,
    }
    return (
        CoordDataset(inputs, y, dict(meta)),
        FunctionalDataset(coeffs, clean, noise, y, dict(meta)),
    )


class ConditionalExpectation:
    """Bayes predictor E[Y | G] of a distribution, fed generating coefficients."""

    def __init__(self, dist: FunctionalDistribution):
        self.target = dist.target

    def __call__(self, coeffs: np.ndarray) -> np.ndarray:
        return eval_target(self.target, coeffs)


Predictor = FmlpModel | Callable[[np.ndarray], np.ndarray]


def estimate_risk(
    model: Predictor,
    dist: FunctionalDistribution,
    n_test: int,
    p: int | None = None,
    mode: ProjectionMode | None = None,
    stream: str = "test",
) -> tuple[float, float]:
    """Monte Carlo RMSE on fresh draws and its delta-method standard error.

    An :class:`FmlpModel` sees ``pi_p(G)`` (``p`` defaults to the model's
    input dimension); any other callable receives the generating
    coefficients directly.
    """
    if int(n_test) != n_test or n_test < 2:
        raise ValidationError("n_test must be an integer >= 2")
    n_test = int(n_test)
    sq = np.empty(n_test)
    if isinstance(model, FmlpModel):
        p = model.p if p is None else p
        if p != model.p:
            raise ValidationError(f"model expects p={model.p}, got p={p}")
        mode = mode or ProjectionMode.exact(p)
    for start in range(0, n_test, _CHUNK):
        idx = range(start, min(start + _CHUNK, n_test))
        coeffs = draw_coefficients(dist, idx, stream)
        y = eval_target(dist.target, coeffs) + draw_noise(dist, idx, stream)
        if isinstance(model, FmlpModel):
            pred = model.predict(project_coefficients(dist, coeffs, mode, stream, start))
        else:
            pred = np.asarray(model(coeffs), dtype=np.float64)
        sq[start : start + len(idx)] = (pred - y) ** 2
    mse = float(sq.mean())
    rmse = math.sqrt(mse)
    se_mse = float(sq.std(ddof=1)) / math.sqrt(n_test)
    se = se_mse / (2.0 * rmse) if rmse > 0 else 0.0
    return rmse, se


def sqnorm_second_moment(dist: FunctionalDistribution) -> float:
    """E[(sum_k xi_k^2)^2] for the unclipped Gaussian coefficient law."""
    var = dist.coefficient_sd**2
    return float(var.sum() ** 2 + 2.0 * (var**2).sum())
