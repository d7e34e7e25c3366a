"""Coordinate maps onto a finite-dimensional orthonormal system.

A function known in closed form is projected with quadrature inner products
(:func:`project_exact`). A curve only observed at a handful of abscissae is
projected by (optionally ridge-penalised) linear least squares
(:func:`project_sampled`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import BasisSystem, QuadratureRule, reference_rule
from .errors import (
    ConditioningError,
    DimensionError,
    EvaluationError,
    OrderingError,
    UnderdeterminedError,
    ValidationError,
)

#: Anything mapping an array of abscissae in [0, 1] to an array of values.
EvaluableFunction = Callable[[np.ndarray], np.ndarray]

RCOND_THRESHOLD = 1e-12


@dataclass(frozen=True, eq=False)
class CoordinateVector:
    coords: np.ndarray
    basis_id: str

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 1:
            raise DimensionError("coordinates must be a 1-d vector")
        object.__setattr__(self, "coords", coords)

    def __len__(self) -> int:
        return self.coords.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


@dataclass(frozen=True, eq=False)
class SampledFunction:
    xs: np.ndarray
    values: np.ndarray
    id: str = ""

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if xs.ndim != 1 or values.shape != xs.shape:
            raise DimensionError("xs and values must be 1-d arrays of equal length")
        if xs.size == 0:
            raise DimensionError("a sampled function needs at least one observation")
        if np.any(xs < 0.0) or np.any(xs > 1.0):
            raise ValidationError(f"curve {self.id!r}: abscissae must lie in [0, 1]")
        if np.any(np.diff(xs) <= 0.0):
            raise OrderingError(f"curve {self.id!r}: abscissae must be strictly increasing")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", values)


def _evaluate(g: EvaluableFunction, x: np.ndarray) -> np.ndarray:
    values = np.asarray(g(x), dtype=np.float64)
    if values.shape != x.shape:
        values = np.broadcast_to(values, x.shape)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("function is not finite on every quadrature node")
    return values


def project_exact(
    g: EvaluableFunction, basis: BasisSystem, rule: QuadratureRule | None = None
) -> CoordinateVector:
    """Coordinates <g, phi_k> computed with the quadrature rule."""
    rule = rule or reference_rule()
    values = _evaluate(g, rule.nodes)
    coords = basis(rule.nodes) @ (rule.weights * values)
    return CoordinateVector(coords, basis.id)


def project_values(
    values: np.ndarray, basis: BasisSystem, rule: QuadratureRule | None = None
) -> np.ndarray:
    """Batch form of :func:`project_exact` for curves already tabulated on
    the rule's nodes; ``values`` has shape (n_curves, n_nodes)."""
    rule = rule or reference_rule()
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("non-finite curve values on quadrature nodes")
    return (values * rule.weights) @ basis(rule.nodes).T


def project_sampled(
    f: SampledFunction, basis: BasisSystem, ridge: float = 0.0
) -> CoordinateVector:
    """Least-squares coordinates of an observed curve.

    Minimises ``sum_j (v_j - sum_k c_k phi_k(x_j))^2 + ridge * |c|^2``. The
    penalised problem is solved as an augmented least-squares system rather
    than through the normal equations.
    """
    if ridge < 0:
        raise ValidationError("ridge must be nonnegative")
    m = f.xs.size
    if m < basis.p:
        raise UnderdeterminedError(
            f"curve {f.id!r}: {m} samples cannot determine {basis.p} coordinates"
        )
    design = basis(f.xs).T
    singular = np.linalg.svd(design, compute_uv=False)
    rcond = singular[-1] / singular[0] if singular[0] > 0 else 0.0
    if ridge == 0 and rcond < RCOND_THRESHOLD:
        raise ConditioningError(
            f"curve {f.id!r}: design matrix is rank deficient "
            f"(rcond={rcond:.3g}); set ridge > 0"
        )
    rhs = f.values
    if ridge > 0:
        design = np.vstack([design, np.sqrt(ridge) * np.eye(basis.p)])
        rhs = np.concatenate([rhs, np.zeros(basis.p)])
    coords, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    return CoordinateVector(coords, basis.id)


def _check_basis(c: CoordinateVector, basis: BasisSystem) -> None:
    if len(c) != basis.p:
        raise DimensionError(f"{len(c)} coordinates for a basis of dimension {basis.p}")


def reconstruct(c: CoordinateVector, basis: BasisSystem, x) -> float | np.ndarray:
    """Evaluate sum_k c_k phi_k at ``x`` (scalar in, scalar out)."""
    _check_basis(c, basis)
    scalar = np.ndim(x) == 0
    values = c.coords @ basis(x)
    return float(values[0]) if scalar else values


def expansion(c: CoordinateVector, basis: BasisSystem) -> EvaluableFunction:
    """The reconstructed function as an evaluable callable."""
    _check_basis(c, basis)
    return lambda x: c.coords @ basis(x)


def residual_norm(
    g: EvaluableFunction,
    c: CoordinateVector,
    basis: BasisSystem,
    rule: QuadratureRule | None = None,
) -> float:
    """L2 distance between ``g`` and the expansion of ``c``."""
    rule = rule or reference_rule()
    _check_basis(c, basis)
    diff = _evaluate(g, rule.nodes) - c.coords @ basis(rule.nodes)
    return float(np.sqrt(max(rule.integrate(diff * diff), 0.0)))


def l2_norm(g: EvaluableFunction, rule: QuadratureRule | None = None) -> float:
    rule = rule or reference_rule()
    values = _evaluate(g, rule.nodes)
    return float(np.sqrt(rule.integrate(values * values)))
