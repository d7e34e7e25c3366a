"""Projection-based multilayer perceptrons for functional inputs."""

__version__ = "0.1.0"

from .basis import (
    BasisSystem,
    Measure,
    QuadratureRule,
    eval_basis,
    gram_matrix,
    make_bspline_basis,
    make_fourier_basis,
    make_quadrature,
    reference_rule,
)
from .datagen import (
    ConditionalExpectation,
    FunctionalDistribution,
    ProjectionMode,
    TargetFunctional,
    estimate_risk,
    eval_target,
    make_dataset,
    sample_curve,
)
from .fmlp import (
    CoordDataset,
    FmlpModel,
    Schedule,
    TrainConfig,
    empirical_rmse,
    forward,
    loss_and_gradient,
    project_l1_ball,
    schedule,
    train,
)
from .projection import (
    CoordinateVector,
    SampledFunction,
    project_exact,
    project_sampled,
    reconstruct,
    residual_norm,
)
