"""Orthonormal function systems on [0, 1] and the quadrature behind them.

Two families are provided:

* ``fourier`` -- 1, sqrt(2)cos(2 pi j x), sqrt(2)sin(2 pi j x), ... in that
  order. The system for ``p`` is a prefix of the system for ``p + 1``.
* ``bspline`` -- clamped B-splines of a given degree, orthonormalised with
  the inverse Cholesky factor of their Gram matrix. The spanned space is
  unchanged by the transform.

All inner products use Lebesgue measure on [0, 1], computed with the
composite Gauss-Legendre rule returned by :func:`reference_rule`.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import solve_triangular

from .errors import ConditioningError, DimensionError, DomainError, KnotError, ValidationError

REFERENCE_PANELS = 64
REFERENCE_NODES = 8


class Measure(enum.Enum):
    """Reference measure of the function space. Only one is supported."""

    LEBESGUE_UNIT_INTERVAL = "lebesgue[0,1]"

    @property
    def total_mass(self) -> float:
        return 1.0


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    # polynomials of degree <= exactness are integrated exactly on each panel
    exactness: int = 1

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate sampled values; the last axis runs over the nodes."""
        return np.asarray(values) @ self.weights

    def __len__(self) -> int:
        return self.nodes.size


def make_quadrature(n_panels: int, nodes_per_panel: int) -> QuadratureRule:
    """Composite Gauss-Legendre rule on [0, 1] with equal panels."""
    if int(n_panels) != n_panels or n_panels < 1:
        raise ValidationError(f"n_panels must be a positive integer, got {n_panels!r}")
    if int(nodes_per_panel) != nodes_per_panel or nodes_per_panel < 1:
        raise ValidationError(
            f"nodes_per_panel must be a positive integer, got {nodes_per_panel!r}"
        )
    return _cached_quadrature(int(n_panels), int(nodes_per_panel))


@lru_cache(maxsize=32)
def _cached_quadrature(n_panels: int, nodes_per_panel: int) -> QuadratureRule:
    ref_x, ref_w = np.polynomial.legendre.leggauss(nodes_per_panel)
    h = 1.0 / n_panels
    left = np.arange(n_panels) * h
    nodes = (left[:, None] + 0.5 * h * (ref_x[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * h * ref_w, n_panels)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights, exactness=2 * nodes_per_panel - 1)


def reference_rule() -> QuadratureRule:
    return make_quadrature(REFERENCE_PANELS, REFERENCE_NODES)


@dataclass(frozen=True, eq=False)
class BasisSystem:
    """A p-dimensional orthonormal system on [0, 1].

    For splines, ``transform`` maps raw B-spline values to orthonormal values:
    ``phi(x) = transform @ raw(x)``. For Fourier it is the identity.
    """

    family: str
    p: int
    degree: int | None = None
    interior_knots: tuple[float, ...] = ()
    transform: np.ndarray = field(default=None, repr=False)

    @property
    def id(self) -> str:
        if self.family == "fourier":
            return f"fourier:p={self.p}"
        knots = ",".join(repr(float(k)) for k in self.interior_knots)
        return f"bspline:degree={self.degree}:knots=[{knots}]"

    @property
    def knot_vector(self) -> np.ndarray | None:
        if self.family != "bspline":
            return None
        d = self.degree
        return np.r_[np.zeros(d + 1), np.asarray(self.interior_knots, float), np.ones(d + 1)]

    def raw(self, x) -> np.ndarray:
        """Untransformed family values, shape (p, len(x))."""
        x = _check_abscissae(x)
        if self.family == "fourier":
            return _fourier_values(self.p, x)
        return _bspline_values(self.knot_vector, self.degree, x)

    def __call__(self, x) -> np.ndarray:
        """Orthonormal values phi_1..phi_p at ``x``, shape (p, len(x))."""
        values = self.raw(x)
        if self.family == "fourier":
            return values
        return self.transform @ values

    def to_dict(self) -> dict:
        if self.family == "fourier":
            return {"family": "fourier", "p": self.p}
        return {
            "family": "bspline",
            "p": self.p,
            "degree": self.degree,
            "interior_knots": [float(k) for k in self.interior_knots],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_abscissae(x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1:
        raise DomainError("abscissae must be a scalar or a 1-d array")
    if not np.all((x >= 0.0) & (x <= 1.0)):
        raise DomainError("abscissae must lie in [0, 1]")
    return x


def _fourier_values(p: int, x: np.ndarray) -> np.ndarray:
    out = np.empty((p, x.size))
    out[0] = 1.0
    for k in range(2, p + 1):
        j = k // 2
        if k % 2 == 0:
            out[k - 1] = math.sqrt(2.0) * np.cos(2.0 * math.pi * j * x)
        else:
            out[k - 1] = math.sqrt(2.0) * np.sin(2.0 * math.pi * j * x)
    return out


def _bspline_values(knots: np.ndarray, degree: int, x: np.ndarray) -> np.ndarray:
    return BSpline.design_matrix(x, knots, degree).toarray().T


def make_fourier_basis(p: int) -> BasisSystem:
    if int(p) != p or p < 1:
        raise DimensionError(f"basis dimension must be >= 1, got {p!r}")
    return BasisSystem("fourier", int(p))


def make_bspline_basis(degree: int, interior_knots: Sequence[float] = ()) -> BasisSystem:
    """Clamped B-spline basis made orthonormal on [0, 1].

    The Gram matrix of the raw family is taken under the reference rule;
    with ``G = C C^T`` its Cholesky factorisation, the stored transform is
    ``C^{-1}``. Knots placed on multiples of 1/64 make the reference rule
    exact for these piecewise polynomials.
    """
    if int(degree) != degree or degree < 1:
        raise ValidationError(f"degree must be an integer >= 1, got {degree!r}")
    knots = tuple(float(k) for k in interior_knots)
    if any(not (0.0 < k < 1.0) for k in knots):
        raise KnotError(f"interior knots must lie strictly inside (0, 1): {knots}")
    if any(b < a for a, b in zip(knots, knots[1:])):
        raise KnotError(f"interior knots must be nondecreasing: {knots}")
    degree = int(degree)
    if any(knots.count(k) > degree for k in set(knots)):
        raise KnotError("interior knot multiplicity must not exceed the degree")
    p = degree + 1 + len(knots)
    raw = BasisSystem("bspline", p, degree, knots, np.eye(p))
    gram = gram_matrix(raw, reference_rule())
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("B-spline Gram matrix is not positive definite") from exc
    if 1.0 / np.linalg.cond(gram) < 1e-12:
        raise ConditioningError("B-spline Gram matrix is numerically singular")
    transform = solve_triangular(chol, np.eye(p), lower=True)
    transform.setflags(write=False)
    return BasisSystem("bspline", p, degree, knots, transform)


def eval_basis(basis: BasisSystem, k: int, x: float) -> float:
    """Value of the k-th (1-based) orthonormal function at ``x``."""
    if int(k) != k or not 1 <= k <= basis.p:
        raise DomainError(f"basis index {k!r} outside 1..{basis.p}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x = {x!r} outside [0, 1]")
    return float(basis(x)[int(k) - 1, 0])


def gram_matrix(basis: BasisSystem, rule: QuadratureRule | None = None) -> np.ndarray:
    rule = rule or reference_rule()
    values = basis(rule.nodes)
    return (values * rule.weights) @ values.T


def basis_from_dict(doc: dict) -> BasisSystem:
    """Rebuild a basis from its JSON form; the transform is recomputed."""
    family = doc.get("family")
    if family == "fourier":
        return make_fourier_basis(doc["p"])
    if family == "bspline":
        basis = make_bspline_basis(doc["degree"], doc.get("interior_knots", []))
        if "p" in doc and doc["p"] != basis.p:
            raise DimensionError(
                f"declared p={doc['p']} does not match degree+1+#knots={basis.p}"
            )
        return basis
    raise ValidationError(f"unknown basis family {family!r}")


def basis_from_json(text: str) -> BasisSystem:
    return basis_from_dict(json.loads(text))
