"""Acceptance gate: one test per criterion, each recording a verdict line.

The two sweep criteria run the shipped default configs and take several
minutes; everything else finishes in seconds.
"""

import math
import time

import numpy as np
import pytest

from funcmlp import harness
from funcmlp.basis import gram_matrix, make_bspline_basis, make_fourier_basis, reference_rule
from funcmlp.datagen import ConditionalExpectation, FunctionalDistribution, TargetFunctional, estimate_risk
from funcmlp.fmlp import (
    CoordDataset,
    FmlpModel,
    TrainConfig,
    empirical_rmse,
    h3_diagnostics,
    loss_and_gradient,
    project_l1_ball,
    schedule,
    sigmoid,
    train,
)
from funcmlp.ingest import parse_config
from funcmlp.projection import CoordinateVector, expansion, l2_norm, project_exact, residual_norm


def test_criterion_01_orthonormality(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(1)
    bases = [make_fourier_basis(p) for p in range(1, 17)]
    for degree in (1, 2, 3):
        for m in range(0, 9):
            bases.append(make_bspline_basis(degree, np.linspace(0, 1, m + 2)[1:-1]))
            bases.append(make_bspline_basis(degree, np.sort(rng.uniform(0.02, 0.98, m))))
    for basis in bases:
        worst = max(worst, np.abs(gram_matrix(basis, reference_rule()) - np.eye(basis.p)).max())
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 5
    verdict(1, ok, f"max|Gram - I| = {worst:.2e} over {len(bases)} bases, {elapsed:.2f} s")
    assert ok


def _random_curve(rng):
    kind = rng.integers(3)
    if kind == 0:
        coeffs = rng.standard_normal(rng.integers(1, 30))
        return expansion(CoordinateVector(coeffs, "g"), make_fourier_basis(coeffs.size))
    if kind == 1:
        poly = rng.standard_normal(6)
        return lambda x: np.polyval(poly, x)
    a, b = rng.uniform(-3, 3, 2)
    return lambda x: np.exp(a * x) * np.sin(b * x + 1)


def test_criterion_02_projection_properties(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    failures = []
    n_curves = 100
    for _ in range(n_curves):
        f, g = _random_curve(rng), _random_curve(rng)
        p = int(rng.integers(1, 16))
        basis, bigger = make_fourier_basis(p), make_fourier_basis(p + 1)
        cf, cg = project_exact(f, basis), project_exact(g, basis)
        if cf.norm() > l2_norm(f) + 1e-9:
            failures.append("contraction")
        if np.linalg.norm(cf.coords - cg.coords) > l2_norm(lambda x: f(x) - g(x)) + 1e-9:
            failures.append("lipschitz")
        if np.abs(project_exact(f, bigger).coords[:p] - cf.coords).max() > 1e-12:
            failures.append("nestedness")
        if np.abs(project_exact(expansion(cf, basis), basis).coords - cf.coords).max() > 1e-9:
            failures.append("idempotence")
        if residual_norm(f, project_exact(f, bigger), bigger) > residual_norm(f, cf, basis) + 1e-12:
            failures.append("monotone residual")
    spline = make_bspline_basis(3, [0.2, 0.5, 0.7])
    for _ in range(n_curves):
        c = CoordinateVector(rng.standard_normal(spline.p), spline.id)
        if np.abs(project_exact(expansion(c, spline), spline).coords - c.coords).max() > 1e-9:
            failures.append("spline idempotence")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 30
    verdict(2, ok, f"{n_curves} random curves per property, failures={sorted(set(failures))}, {elapsed:.1f} s")
    assert ok


def test_criterion_03_golden_values(verdict):
    x = lambda t: np.asarray(t, dtype=float)  # noqa: E731
    c = project_exact(x, make_fourier_basis(3)).coords
    expected = np.array([0.5, 0.0, -math.sqrt(2) / (2 * math.pi)])
    err_c = np.abs(c - expected).max()
    b1 = make_fourier_basis(1)
    err_r = abs(residual_norm(x, project_exact(x, b1), b1) - math.sqrt(1 / 12))
    ok = err_c < 1e-9 and err_r < 1e-8
    verdict(3, ok, f"coordinate error {err_c:.1e}, residual error {err_r:.1e}")
    assert ok


def test_criterion_04_gradient_check(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    h = 1e-6
    for case in range(50):
        rng = np.random.default_rng(4000 + case)
        L = int(rng.integers(1, 5))
        a = rng.standard_normal(L)
        model = FmlpModel(a, rng.standard_normal(L), rng.standard_normal((L, 3)), float(np.abs(a).sum()) + 1)
        data = CoordDataset(rng.standard_normal((10, 3)), rng.standard_normal(10))
        _, grad = loss_and_gradient(model, data)
        theta = np.concatenate([model.a, model.beta0, model.beta.ravel()])

        def loss(th):
            pred = sigmoid(th[L : 2 * L] + data.inputs @ th[2 * L :].reshape(L, 3).T) @ th[:L]
            return np.mean((pred - data.targets) ** 2)

        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd = (loss(theta + e) - loss(theta - e)) / (2 * h)
            an = grad.flat()[i]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-3))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 10
    verdict(4, ok, f"max relative error {worst:.1e} over 50 cases, {elapsed:.2f} s")
    assert ok


def test_criterion_05_l1_projection(verdict):
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        v = rng.standard_normal(d) * rng.uniform(0.1, 5)
        radius = rng.uniform(0.05, 3)
        u = project_l1_ball(v, radius)
        # sample the boundary of the ball: random sign patterns on the simplex
        w = rng.dirichlet(np.ones(d), 500) * radius * rng.choice([-1, 1], (500, d))
        closer = np.linalg.norm(v - w, axis=1) < np.linalg.norm(v - u) - 1e-9
        bad += int(np.abs(u).sum() > radius + 1e-12 or closer.any())
    g1 = project_l1_ball([3.0, 0.0], 1.0)
    g2 = project_l1_ball([2.0, 1.0], 1.0)
    golden = np.allclose(g1, [1, 0], atol=1e-15) and np.allclose(g2, [1, 0], atol=1e-15)
    ok = bad == 0 and golden
    verdict(5, ok, f"{bad} infeasible/suboptimal of 1000, golden (3,0)->{g1.tolist()} (2,1)->{g2.tolist()}")
    assert ok


def test_criterion_06_schedule(verdict):
    s = schedule(100)
    h_lo = h3_diagnostics(schedule(10**3))[0]
    h_hi = h3_diagnostics(schedule(10**9))[0]
    ok = s.L_n == 5 and abs(s.alpha_n - 1.778279) < 1e-6 and h_hi * 10 <= h_lo
    verdict(6, ok, f"schedule(100)=({s.L_n}, {s.alpha_n:.6f}), complexity-term ratio 1e3/1e9 = {h_lo / h_hi:.1f}")
    assert ok


def test_criterion_07_planted_recovery(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    p, L, alpha, n = 3, 3, 3.0, 2000
    X = rng.standard_normal((n, p)) * np.arange(1, p + 1) ** -1.5
    planted = FmlpModel(project_l1_ball(rng.uniform(-2, 2, L), alpha), rng.uniform(-1, 1, L),
                        rng.uniform(-2, 2, (L, p)), alpha)
    data = CoordDataset(X, planted.predict(X))
    model, _ = train(data, L, alpha, TrainConfig())
    rmse = empirical_rmse(model, data)
    elapsed = time.perf_counter() - t0
    ok = rmse < 1e-3 and elapsed < 120
    verdict(7, ok, f"planted RMSE {rmse:.2e}, {elapsed:.1f} s")
    assert ok


def test_criterion_08_approximation_trend(verdict):
    t0 = time.perf_counter()
    cfg = parse_config({"kind": "approx"})
    result = harness.run_approx_sweep(cfg)
    sup = result.sup_errors(cfg.seeds[0])
    elapsed = time.perf_counter() - t0
    ok = (all(b < a for a, b in zip(sup, sup[1:])) and sup[-1] < 0.1 and elapsed < 600)
    cells = ", ".join(f"({c.p},{c.L}):{c.sup_error:.4f}" for c in result.cells)
    verdict(8, ok, f"sup-error {cells}, {elapsed:.0f} s")
    assert ok


@pytest.fixture(scope="module")
def consistency_run():
    t0 = time.perf_counter()
    cfg = parse_config({"kind": "consistency"})
    result = harness.run_consistency_sweep(cfg)
    return cfg, result, time.perf_counter() - t0


def test_criterion_09_consistency_trend(verdict, consistency_run):
    cfg, result, elapsed = consistency_run
    assert cfg.grid_p == [5] and cfg.grid_n == [100, 400, 1600, 6400]
    assert cfg.distribution.noise_sd == 0.2 and cfg.distribution.target.kind == "sine"
    passing = [s for s in cfg.seeds if harness.gap_trend_ok(result.path(s, 5))]
    ok = len(cfg.seeds) == 5 and len(passing) >= 4 and elapsed < 1800
    paths = "; ".join(
        f"seed {s}: " + " ".join(f"{c.gap:.3f}" for c in result.path(s, 5)) for s in cfg.seeds
    )
    verdict(9, ok, f"{len(passing)}/5 seeds pass, gaps {paths}, {elapsed:.0f} s")
    assert ok


def test_criterion_10_bayes_risk(verdict):
    shipped = {kind: parse_config({"kind": kind}).distribution for kind in ("approx", "consistency", "schedule")}
    shipped["linear"] = FunctionalDistribution(target=TargetFunctional("linear", (1.0, 0.5, -0.25)))
    lines, ok = [], True
    for name, dist in shipped.items():
        rmse, se = estimate_risk(ConditionalExpectation(dist), dist, 100_000, stream="acceptance")
        good = abs(rmse - dist.noise_sd) <= 3 * se
        ok &= good
        lines.append(f"{name}: {rmse:.4f} vs {dist.noise_sd} (se {se:.1e})")
    verdict(10, ok, "; ".join(lines))
    assert ok


def _snapshot(table):
    return [(r.run_id, r.config_hash, r.param_p, r.param_L, r.param_n, r.metric,
             np.float64(r.value).tobytes(), np.float64(r.se).tobytes()) for r in table]


def test_criterion_11_reproducibility(verdict, tmp_path):
    fast = {"restarts": 3, "max_iters": 200}
    approx = parse_config({"kind": "approx", "grid": {"p": [2, 4], "L": [2, 4]}, "n_train": 300,
                           "train": fast})
    cons = parse_config({"kind": "consistency", "grid": {"n": [100, 200]}, "seeds": [0, 1],
                         "n_test": 2000, "train": fast})
    sched = parse_config({"kind": "schedule"})
    runs = {
        "approx": lambda: harness.run_approx_sweep(approx).table,
        "consistency": lambda: harness.run_consistency_sweep(cons).table,
        "schedule": lambda: harness.run_schedule_check(sched.grid_n, sched.hash).table,
    }
    same = {}
    for name, run in runs.items():
        a, b = run(), run()
        same[name] = _snapshot(a) == _snapshot(b) and len(a) > 0
    ok = all(same.values())
    verdict(11, ok, f"bit-identical metric columns: {same}")
    assert ok
