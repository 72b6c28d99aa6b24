"""Conditional quantile estimation through optimal vector quantization.

The library quantizes the covariate with a competitively trained codebook
and answers quantile queries from the responses in the matching Voronoi
cell, with a bootstrap-aggregated variant for smooth curves, classical
kernel and nearest-neighbor baselines, and a seeded simulation harness
that reproduces the expected convergence behavior at desk scale.
"""

__version__ = "0.1.0"

from .core import (
    Dataset,
    QuantileCurve,
    QuantileLevel,
    check_loss,
    sample_quantile,
    weighted_check_argmin,
)
from .quantizer import (
    ClvqConfig,
    Grid,
    InsufficientSupportError,
    StepSchedule,
    clvq_step,
    clvq_train,
    clvq_train_bootstrap,
    distortion,
    grid_separation,
    load_grid,
    project,
    save_grid,
    uniform_optimal_grid,
    zador_reference_d1,
)
from .estimator import (
    BootstrapEstimator,
    EmptyCellError,
    QuantEstimator,
    fit,
    fit_bootstrap,
)
from .competitors import (
    KernelConfig,
    KnnEstimator,
    knn_predict,
    knn_select_k,
    local_constant_predict,
    local_linear_predict,
    select_h_mean_cv,
    yu_jones_bandwidth,
)
from .simulation import (
    ExperimentConfig,
    LocationScaleModel,
    approx_quantile_qtilde,
    cubic_beta_model,
    generate,
    population_quantile,
    run_approximation_rate_experiment,
    run_comparison_experiment,
    run_consistency_experiment,
    run_rate_experiment_zador,
)

__all__ = [
    "__version__",
    "Dataset",
    "QuantileCurve",
    "QuantileLevel",
    "check_loss",
    "sample_quantile",
    "weighted_check_argmin",
    "ClvqConfig",
    "Grid",
    "InsufficientSupportError",
    "StepSchedule",
    "clvq_step",
    "clvq_train",
    "clvq_train_bootstrap",
    "distortion",
    "grid_separation",
    "load_grid",
    "project",
    "save_grid",
    "uniform_optimal_grid",
    "zador_reference_d1",
    "BootstrapEstimator",
    "EmptyCellError",
    "QuantEstimator",
    "fit",
    "fit_bootstrap",
    "KernelConfig",
    "KnnEstimator",
    "knn_predict",
    "knn_select_k",
    "local_constant_predict",
    "local_linear_predict",
    "select_h_mean_cv",
    "yu_jones_bandwidth",
    "ExperimentConfig",
    "LocationScaleModel",
    "approx_quantile_qtilde",
    "cubic_beta_model",
    "generate",
    "population_quantile",
    "run_approximation_rate_experiment",
    "run_comparison_experiment",
    "run_consistency_experiment",
    "run_rate_experiment_zador",
]
