"""Single-hidden-layer perceptron on projected coordinates.

    h(x) = sum_l a_l * T(b0_l + sum_k B_lk x_k),   sum_l |a_l| <= alpha

with ``T`` the logistic sigmoid. Training is projected full-batch gradient
descent: a gradient step on every parameter, then the output weights are
projected back onto the L1 ball of radius ``alpha``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import DimensionError, DivergenceError, EmptyDataError, ValidationError

log = logging.getLogger(__name__)

FEASIBILITY_SLACK = 1e-9


def sigmoid(z):
    """Logistic function, computed through tanh to avoid overflow."""
    return 0.5 + 0.5 * np.tanh(0.5 * np.asarray(z))


@dataclass(eq=False)
class FmlpModel:
    a: np.ndarray
    beta0: np.ndarray
    beta: np.ndarray
    alpha: float
    activation: str = "sigmoid"

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        self.beta0 = np.asarray(self.beta0, dtype=np.float64).reshape(-1)
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=np.float64))
        L = self.a.size
        if L < 1 or self.beta0.size != L or self.beta.shape[0] != L:
            raise DimensionError("a, beta0 and the rows of beta must all have length L")
        if self.beta.shape[1] < 1:
            raise DimensionError("input dimension p must be >= 1")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        if self.activation != "sigmoid":
            raise ValidationError(f"unsupported activation {self.activation!r}")
        if np.abs(self.a).sum() > self.alpha + FEASIBILITY_SLACK:
            raise ValidationError(
                f"output weights violate the budget: sum|a| = {np.abs(self.a).sum()!r}"
                f" > alpha = {self.alpha!r}"
            )

    @property
    def L(self) -> int:
        return self.a.size

    @property
    def p(self) -> int:
        return self.beta.shape[1]

    @classmethod
    def zeros(cls, L: int, p: int, alpha: float) -> "FmlpModel":
        return cls(np.zeros(L), np.zeros(L), np.zeros((L, p)), alpha)

    def predict(self, X) -> np.ndarray:
        """Vectorised forward pass over the rows of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.p:
            raise DimensionError(f"expected {self.p} input coordinates, got {X.shape[1]}")
        return sigmoid(self.beta0 + X @ self.beta.T) @ self.a

    def copy(self) -> "FmlpModel":
        return FmlpModel(self.a.copy(), self.beta0.copy(), self.beta.copy(), self.alpha)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "L": self.L,
            "alpha": float(self.alpha),
            "activation": self.activation,
            "a": self.a.tolist(),
            "beta0": self.beta0.tolist(),
            "beta": self.beta.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FmlpModel":
        model = cls(doc["a"], doc["beta0"], doc["beta"], doc["alpha"], doc.get("activation", "sigmoid"))
        if model.p != doc.get("p", model.p) or model.L != doc.get("L", model.L):
            raise DimensionError("declared p/L disagree with the weight arrays")
        return model


def forward(model: FmlpModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != model.p:
        raise DimensionError(f"expected a vector of {model.p} coordinates, got shape {x.shape}")
    return float(model.predict(x)[0])


@dataclass(eq=False)
class CoordDataset:
    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if self.targets.size == 0:
            self.inputs = self.inputs.reshape(0, self.inputs.shape[-1] if self.inputs.size else 0)
        if self.inputs.shape[0] != self.targets.size:
            raise DimensionError(
                f"{self.inputs.shape[0]} input rows but {self.targets.size} targets"
            )
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValidationError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.targets.size

    @property
    def p(self) -> int:
        return self.inputs.shape[1]


def _check_data(model: FmlpModel, data: CoordDataset) -> None:
    if data.n == 0:
        raise EmptyDataError("dataset is empty")
    if data.p != model.p:
        raise DimensionError(f"dataset has p={data.p}, model expects p={model.p}")


@dataclass
class Gradient:
    a: np.ndarray
    beta0: np.ndarray
    beta: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.a, self.beta0, self.beta.ravel()])


def loss_and_gradient(model: FmlpModel, data: CoordDataset) -> tuple[float, Gradient]:
    """Empirical mean squared error and its gradient in (a, beta0, beta)."""
    _check_data(model, data)
    X, y = data.inputs, data.targets
    s = sigmoid(model.beta0 + X @ model.beta.T)
    resid = s @ model.a - y
    n = y.size
    loss = float(resid @ resid) / n
    g_out = (2.0 / n) * resid
    g_a = s.T @ g_out
    g_z = g_out[:, None] * model.a[None, :] * s * (1.0 - s)
    return loss, Gradient(g_a, g_z.sum(axis=0), g_z.T @ X)


def empirical_rmse(model: FmlpModel, data: CoordDataset) -> float:
    _check_data(model, data)
    resid = model.predict(data.inputs) - data.targets
    return float(np.sqrt(np.mean(resid * resid)))


def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto {u : sum |u_i| <= radius}.

    Soft-thresholds |v| at the level found by the sort-and-cumulate rule.
    """
    if not radius > 0:
        raise ValidationError("radius must be positive")
    v = np.asarray(v, dtype=np.float64)
    u = np.abs(v)
    if u.sum() <= radius:
        return v.copy()
    mu = np.sort(u)[::-1]
    cssv = np.cumsum(mu) - radius
    ind = np.arange(1, u.size + 1)
    rho = np.nonzero(mu - cssv / ind > 0)[0][-1]
    theta = cssv[rho] / (rho + 1)
    return np.sign(v) * np.maximum(u - theta, 0.0)


@dataclass(frozen=True)
class Schedule:
    n: int
    L_n: int
    alpha_n: float


def schedule(n: int) -> Schedule:
    """L_n = max(1, ceil(ln n)), alpha_n = n^(1/8)."""
    if int(n) != n or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    return Schedule(n, max(1, math.ceil(math.log(n))), n ** 0.125)


def h3_diagnostics(s: Schedule, delta: float = 0.25) -> tuple[float, float]:
    """(L a^4 log(L a) / n, a^4 / n^(1 - delta)) for a schedule entry."""
    la = s.L_n * s.alpha_n
    return (
        s.L_n * s.alpha_n**4 * math.log(la) / s.n,
        s.alpha_n**4 / s.n ** (1.0 - delta),
    )


@dataclass
class TrainConfig:
    restarts: int = 20
    max_iters: int = 2000
    # "lm": damped Gauss-Newton direction; "gd": plain gradient direction
    method: str = "lm"
    step: float = 0.5
    seed: int = 0
    tolerance: float = 1e-10
    patience: int = 50
    damping: float = 1e-3
    workers: int = 1

    def __post_init__(self):
        if self.method not in ("lm", "gd"):
            raise ValidationError(f"unknown training method {self.method!r}")
        if self.restarts < 1 or self.max_iters < 1 or self.patience < 1:
            raise ValidationError("restarts, max_iters and patience must be >= 1")
        if not self.step > 0 or self.tolerance < 0 or not self.damping > 0:
            raise ValidationError("step and damping must be > 0, tolerance >= 0")


@dataclass
class RestartTrace:
    restart: int
    losses: list[float]
    final_loss: float
    iterations: int


@dataclass
class TrainingReport:
    best_restart: int
    final_loss: float
    traces: list[RestartTrace]

    @property
    def final_rmse(self) -> float:
        return math.sqrt(self.final_loss)


def init_model(p: int, L: int, alpha: float, seed: int, restart: int) -> FmlpModel:
    gen = rngmod.stream(seed, "fmlp/init", restart)
    scale = 1.0 / math.sqrt(p)
    beta = gen.uniform(-1.0, 1.0, size=(L, p)) * scale
    beta0 = gen.uniform(-1.0, 1.0, size=L) * scale
    a = project_l1_ball(gen.uniform(-alpha, alpha, size=L), alpha)
    return FmlpModel(a, beta0, beta, alpha)


class _Problem:
    """Flat-parameter view of the training objective.

    Parameters are packed as ``[a, beta0, beta.ravel()]``. Activations and
    the Jacobian are stored transposed (units x samples) so that every
    write is contiguous.
    """

    def __init__(self, data: CoordDataset, L: int, alpha: float):
        self.XT = np.ascontiguousarray(data.inputs.T)
        self.y = data.targets
        self.n, self.p = data.n, data.p
        self.L, self.alpha = L, alpha
        self._jt = np.empty((L * (self.p + 2), self.n))

    def pack(self, model: FmlpModel) -> np.ndarray:
        return np.concatenate([model.a, model.beta0, model.beta.ravel()])

    def unpack(self, theta: np.ndarray) -> FmlpModel:
        L = self.L
        return FmlpModel(theta[:L], theta[L : 2 * L], theta[2 * L :].reshape(L, self.p), self.alpha)

    def project(self, theta: np.ndarray) -> np.ndarray:
        theta = theta.copy()
        theta[: self.L] = project_l1_ball(theta[: self.L], self.alpha)
        return theta

    def activations(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """Hidden activations (L x n) and residuals at ``theta``."""
        L = self.L
        z = theta[2 * L :].reshape(L, self.p) @ self.XT
        z += theta[L : 2 * L, None]
        s = sigmoid(z)
        return s, theta[:L] @ s - self.y

    def residuals(self, theta) -> np.ndarray:
        return self.activations(theta)[1]

    def jacobian_t(self, theta, s) -> np.ndarray:
        """Transposed Jacobian of the residuals, shape (L * (p + 2), n)."""
        L, p = self.L, self.p
        jt = self._jt
        jt[:L] = s
        ds = jt[L : 2 * L]
        np.multiply(s, 1.0 - s, out=ds)
        ds *= theta[:L, None]
        np.multiply(ds[:, None, :], self.XT[None, :, :], out=jt[2 * L :].reshape(L, p, self.n))
        return jt

    def gradient(self, theta, s, r) -> np.ndarray:
        g_out = (2.0 / self.n) * r
        g_z = s * (1.0 - s) * theta[: self.L, None] * g_out
        return np.concatenate([s @ g_out, g_z.sum(axis=1), (g_z @ self.XT.T).ravel()])

    def loss(self, r) -> float:
        return float(r @ r) / self.n


def _pg_step(prob: _Problem, theta, f, grad, step, restart, it):
    """Backtracking projected-gradient step from ``theta``.

    Returns (theta, s, r, loss, step); theta is None if no decrease was found.
    """
    while step > 1e-16:
        cand = prob.project(theta - step * grad)
        sc, rc = prob.activations(cand)
        fc = prob.loss(rc)
        if not math.isfinite(fc):
            raise DivergenceError(restart, it)
        if fc < f:
            return cand, sc, rc, fc, step
        step *= 0.5
    return None, None, None, f, step


def _lm_step(prob: _Problem, theta, s, r, f, damping, restart, it):
    """Damped Gauss-Newton step followed by the L1 projection of ``a``.

    ``damping`` is the pair (lambda, nu) of the gain-ratio update. Returns
    (theta, s, r, loss, damping); theta is None once lambda has grown past
    1e12 without a decrease.
    """
    lam, nu = damping
    jt = prob.jacobian_t(theta, s)
    A = jt @ jt.T
    g = jt @ r
    scale = np.diag(A) + 1e-12
    while lam < 1e12:
        H = A + np.diag(lam * scale)
        try:
            delta = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            lam *= nu
            nu *= 2.0
            continue
        cand = prob.project(theta + delta)
        sc, rc = prob.activations(cand)
        fc = prob.loss(rc)
        if not math.isfinite(fc):
            raise DivergenceError(restart, it)
        if fc <= f:
            predicted = -(delta @ g) - 0.5 * (delta @ (A @ delta))
            actual = 0.5 * prob.n * (f - fc)
            rho = actual / predicted if predicted > 0 else 0.0
            lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            return cand, sc, rc, fc, (max(lam, 1e-12), 2.0)
        lam *= nu
        nu *= 2.0
    return None, None, None, f, (lam, nu)


def _run_restart(data: CoordDataset, L: int, alpha: float, cfg: TrainConfig, restart: int,
                 callback=None):
    prob = _Problem(data, L, alpha)
    theta = prob.pack(init_model(data.p, L, alpha, cfg.seed, restart))
    s, r = prob.activations(theta)
    f = prob.loss(r)
    if not math.isfinite(f):
        raise DivergenceError(restart, 0)
    losses = [f]
    step, damping = cfg.step, (cfg.damping, 2.0)
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if cfg.method == "lm":
            new = _lm_step(prob, theta, s, r, f, damping, restart, it)
            damping = new[4]
            if new[0] is None:
                # damping exhausted: try a plain projected gradient step
                damping = (cfg.damping, 2.0)
                new = _pg_step(prob, theta, f, prob.gradient(theta, s, r), 4.0 * step, restart, it)
                step = new[4]
                if new[0] is None:
                    losses.append(f)
                    break
            theta, s, r, f = new[:4]
        else:
            cand = prob.project(theta - step * prob.gradient(theta, s, r))
            sc, rc = prob.activations(cand)
            fc = prob.loss(rc)
            if not math.isfinite(fc):
                raise DivergenceError(restart, it)
            if fc <= f:
                theta, s, r, f = cand, sc, rc, fc
            else:
                step *= 0.5
                if step < 1e-16:
                    losses.append(f)
                    break
        losses.append(f)
        if callback is not None:
            callback(restart, it, prob.unpack(theta), f)
        if it >= cfg.patience and losses[-cfg.patience - 1] - f < cfg.tolerance:
            break
    return prob.unpack(theta), RestartTrace(restart, losses, f, it)


def train(
    data: CoordDataset,
    L: int,
    alpha: float,
    cfg: TrainConfig | None = None,
    callback=None,
) -> tuple[FmlpModel, TrainingReport]:
    """Best of ``cfg.restarts`` projected runs (ties go to the lowest index).

    Each iteration moves every parameter along a descent direction and then
    projects the output weights onto the L1 ball, so every iterate is
    feasible. Steps that increase the loss are rejected.

    ``callback(restart, iteration, model, loss)`` is invoked after every
    iteration when given.
    """
    cfg = cfg or TrainConfig()
    if data.n == 0:
        raise EmptyDataError("cannot train on an empty dataset")
    if int(L) != L or L < 1:
        raise ValidationError(f"L must be a positive integer, got {L!r}")
    if not alpha > 0:
        raise ValidationError("alpha must be positive")

    def job(r):
        return _run_restart(data, int(L), float(alpha), cfg, r, callback)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(job, range(cfg.restarts)))
    else:
        results = [job(r) for r in range(cfg.restarts)]

    best = min(range(len(results)), key=lambda r: (results[r][1].final_loss, r))
    traces = [trace for _, trace in results]
    log.debug("best restart %d, loss %.3e", best, traces[best].final_loss)
    return results[best][0], TrainingReport(best, traces[best].final_loss, traces)
