import math

import numpy as np
import pytest

from funcmlp.basis import make_fourier_basis, reference_rule
from funcmlp.datagen import (
    ConditionalExpectation,
    FunctionalDistribution,
    ProjectionMode,
    TargetFunctional,
    draw_coefficients,
    estimate_risk,
    eval_target,
    make_dataset,
    sample_curve,
    sqnorm_second_moment,
)
from funcmlp.errors import BasisMismatchError, EmptyDataError, UnderdeterminedError, ValidationError
from funcmlp.fmlp import FmlpModel
from funcmlp.projection import CoordinateVector, project_exact

SQNORM = TargetFunctional("sqnorm")


def linear(*w):
    return TargetFunctional("linear", tuple(float(v) for v in w))


class TestSampleCurve:
    def test_zero_sds(self):
        dist = FunctionalDistribution(K_max=4, sds=(0.0,) * 4, noise_sd=1.0)
        curve, xi = sample_curve(dist, 7)
        np.testing.assert_array_equal(xi.coords, 0.0)
        np.testing.assert_array_equal(curve(np.linspace(0, 1, 9)), 0.0)

    def test_deterministic(self):
        dist = FunctionalDistribution(seed=42)
        _, a = sample_curve(dist, 13)
        _, b = sample_curve(dist, 13)
        assert a.coords.tobytes() == b.coords.tobytes()
        _, c = sample_curve(dist, 14)
        assert not np.array_equal(a.coords, c.coords)

    def test_curve_matches_coefficients(self):
        dist = FunctionalDistribution(K_max=7)
        curve, xi = sample_curve(dist, 3)
        np.testing.assert_allclose(project_exact(curve, make_fourier_basis(7)).coords, xi.coords, atol=1e-10)

    def test_variance_of_third_coefficient(self):
        dist = FunctionalDistribution(K_max=10, s=1.0)
        xi = draw_coefficients(dist, range(10_000))
        assert abs(xi[:, 2].var(ddof=1) / (1 / 9) - 1) < 0.05

    def test_radius_clipping(self):
        dist = FunctionalDistribution(K_max=5, s=0.6, radius=0.5)
        xi = draw_coefficients(dist, range(500))
        norms = np.linalg.norm(xi, axis=1)
        assert norms.max() <= 0.5 + 1e-12
        assert np.sum(np.isclose(norms, 0.5)) > 0

    def test_negative_index(self):
        with pytest.raises(ValidationError):
            sample_curve(FunctionalDistribution(), -1)


class TestEvalTarget:
    def test_sqnorm_parseval(self):
        assert eval_target(SQNORM, [2.0]) == 4.0

    def test_coordinate_extraction(self):
        assert eval_target(linear(0, 1), [5.0, 7.0, 0.0]) == 7.0

    def test_linear_against_quadrature(self):
        assert eval_target(linear(1, 0.5), [2.0, 2.0]) == 3.0
        basis = make_fourier_basis(2)
        rule = reference_rule()
        phi = basis(rule.nodes)
        w, g = phi[0] + 0.5 * phi[1], 2 * phi[0] + 2 * phi[1]
        assert abs(rule.integrate(w * g) - 3.0) < 1e-9

    def test_sine(self):
        t = TargetFunctional("sine", (1.0, 2.0), scale=0.5)
        assert eval_target(t, [0.3, -0.1]) == pytest.approx(math.sin(0.5 * 0.1), abs=1e-15)

    def test_batch(self):
        xi = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(eval_target(SQNORM, xi), [5.0, 50.0])

    def test_basis_mismatch(self):
        with pytest.raises(BasisMismatchError):
            eval_target(SQNORM, CoordinateVector([1.0, 2.0], "bspline:degree=1:knots=[]"))
        with pytest.raises(BasisMismatchError):
            eval_target(linear(0, 0, 1), [1.0, 2.0])
        # trailing zero weights are harmless
        assert eval_target(linear(1, 0, 0), [3.0, 2.0]) == 3.0

    def test_invalid_kind(self):
        with pytest.raises(ValidationError):
            TargetFunctional("cubic")
        with pytest.raises(ValidationError):
            TargetFunctional("linear")


class TestMakeDataset:
    def test_sqnorm_identity(self):
        dist = FunctionalDistribution(noise_sd=0.0, target=SQNORM)
        data, _ = make_dataset(dist, 200, ProjectionMode.exact(dist.K_max))
        np.testing.assert_allclose(data.targets, (data.inputs**2).sum(axis=1), atol=1e-9)

    def test_empty(self):
        with pytest.raises(EmptyDataError):
            make_dataset(FunctionalDistribution(), 0, ProjectionMode.exact(3))

    def test_noise_sd(self):
        dist = FunctionalDistribution(K_max=5, noise_sd=0.3, target=linear(1, -1))
        _, ref = make_dataset(dist, 100_000, ProjectionMode.exact(3))
        resid = ref.y - eval_target(dist.target, ref.coeffs)
        assert abs(resid.std(ddof=1) / 0.3 - 1) < 0.02

    def test_deterministic(self):
        dist = FunctionalDistribution(seed=9)
        a, _ = make_dataset(dist, 50, ProjectionMode.sampled(5, 30, "random"))
        b, _ = make_dataset(dist, 50, ProjectionMode.sampled(5, 30, "random"))
        assert a.inputs.tobytes() == b.inputs.tobytes()
        assert a.targets.tobytes() == b.targets.tobytes()

    def test_projection_equivalence(self):
        dist = FunctionalDistribution(K_max=6)
        data, ref = make_dataset(dist, 40, ProjectionMode.exact(9))
        np.testing.assert_allclose(data.inputs[:, :6], ref.coeffs, atol=1e-9)
        np.testing.assert_allclose(data.inputs[:, 6:], 0.0, atol=1e-9)
        small, _ = make_dataset(dist, 40, ProjectionMode.exact(3))
        np.testing.assert_allclose(small.inputs, ref.coeffs[:, :3], atol=1e-9)

    def test_sampled_close_to_exact(self):
        dist = FunctionalDistribution(K_max=5)
        exact, _ = make_dataset(dist, 20, ProjectionMode.exact(5))
        sampled, _ = make_dataset(dist, 20, ProjectionMode.sampled(5, 200))
        np.testing.assert_allclose(sampled.inputs, exact.inputs, atol=1e-6)

    def test_underdetermined_grid(self):
        with pytest.raises(UnderdeterminedError):
            ProjectionMode.sampled(5, 3)

    def test_noise_independent_of_inputs(self):
        n = 10_000
        dist = FunctionalDistribution(K_max=6)
        data, ref = make_dataset(dist, n, ProjectionMode.exact(6))
        for k in range(6):
            assert abs(np.corrcoef(ref.noise, data.inputs[:, k])[0, 1]) < 3 / math.sqrt(n)


class TestEstimateRisk:
    @pytest.mark.parametrize(
        "target", [SQNORM, linear(1, 0.5, -0.25), TargetFunctional("sine", (0.5, 1, -1, 0.5, 0.5), 2.0)],
        ids=["sqnorm", "linear", "sine"],
    )
    def test_bayes_risk(self, target):
        dist = FunctionalDistribution(target=target)
        rmse, se = estimate_risk(ConditionalExpectation(dist), dist, 20_000)
        assert abs(rmse - dist.noise_sd) < 3 * se

    def test_zero_model_pure_noise(self):
        dist = FunctionalDistribution(K_max=3, noise_sd=1.0, target=linear(0.0))
        rmse, se = estimate_risk(FmlpModel.zeros(1, 3, 1.0), dist, 20_000)
        assert abs(rmse - 1.0) < 3 * se

    def test_sqnorm_fourth_moment(self):
        dist = FunctionalDistribution(K_max=8, s=1.0, noise_sd=0.5, target=SQNORM)
        closed = sqnorm_second_moment(dist)
        # brute force on independent draws
        rng = np.random.default_rng(0)
        xi = rng.standard_normal((400_000, 8)) * dist.coefficient_sd
        brute = np.mean(np.sum(xi**2, axis=1) ** 2)
        assert abs(brute / closed - 1) < 0.05
        rmse, _ = estimate_risk(lambda c: np.zeros(len(c)), dist, 100_000)
        assert abs(rmse**2 / (0.25 + closed) - 1) < 0.05

    def test_invalid_n(self):
        with pytest.raises(ValidationError):
            estimate_risk(FmlpModel.zeros(1, 2, 1.0), FunctionalDistribution(), 1)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            estimate_risk(FmlpModel.zeros(1, 2, 1.0), FunctionalDistribution(), 10, p=3)


class TestDistribution:
    def test_defaults(self):
        dist = FunctionalDistribution()
        assert (dist.K_max, dist.s, dist.noise_sd) == (25, 1.5, 0.2)
        np.testing.assert_allclose(dist.coefficient_sd, np.arange(1, 26) ** -1.5)
        assert dist.basis.id == "fourier:p=25"

    @pytest.mark.parametrize("kwargs", [{"K_max": 0}, {"noise_sd": -1.0}, {"radius": 0.0}, {"sds": (1.0,)}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            FunctionalDistribution(**kwargs)
