"""Robust functional principal component analysis.

The package estimates functional principal components through a pairwise
self-normalized covariance surface that tolerates heavy-tailed and
contaminated curves, recovers the classical eigenvalue ratios from its
shrunken spectrum by a fixed-point iteration, handles pointwise
measurement noise by curve pre-smoothing or surface smoothing with
diagonal removal, and ships a seeded simulation benchmark comparing the
approaches.
"""

from .eigenratio import (
    ConvergenceDiagnostic,
    EigenratioEstimate,
    METHOD_ELLIPTICAL,
    METHOD_MONTE_CARLO,
    PairScores,
    convergence_condition,
    cpve,
    eigenratio_elliptical,
    eigenratio_mc,
    elliptical_expectation,
    pair_scores,
    rank_select,
)
from .errors import (
    AsymmetrySurfaceError,
    BasisSizeError,
    ConvergenceError,
    DegenerateSampleError,
    DiagonalStateError,
    DimensionMismatchError,
    InsufficientSampleError,
    InvalidGridError,
    PassFpcaError,
    SchemeMismatchError,
    ThresholdError,
)
from .estimators import (
    CovarianceSurface,
    EigenSystem,
    KIND_CLASSICAL,
    KIND_PASS,
    eigendecompose,
    mean_function,
    mspc,
    pass_covariance,
    sample_covariance,
    spatial_median,
)
from .grid import FunctionalSample, Grid, inner_product, l2_norm, make_grid
from .metrics import (
    BenchmarkRow,
    EIGENFUNCTION_METHODS,
    RATIO_METHODS,
    ReplicationResult,
    SolverOptions,
    align_sign,
    collect_replicates,
    config_label,
    derive_seed,
    eigenfunction_mse,
    pve_error,
    run_benchmark,
    truth_pve,
)
from .simulate import (
    GroundTruth,
    OUTLIER_SCHEMES,
    SCORE_LAWS,
    SimulationConfig,
    draw_scores,
    fourier_truth,
    generate,
    inject_outliers,
)
from .smoothing import (
    SCHEME_PRE_SMOOTH,
    SCHEME_SMOOTH_CF,
    SmoothingSpec,
    presmooth,
    remove_diagonal,
    smooth_surface,
)

__version__ = "0.1.0"

__all__ = [
    "AsymmetrySurfaceError",
    "BasisSizeError",
    "BenchmarkRow",
    "ConvergenceDiagnostic",
    "ConvergenceError",
    "CovarianceSurface",
    "DegenerateSampleError",
    "DiagonalStateError",
    "DimensionMismatchError",
    "EIGENFUNCTION_METHODS",
    "EigenSystem",
    "EigenratioEstimate",
    "FunctionalSample",
    "Grid",
    "GroundTruth",
    "InsufficientSampleError",
    "InvalidGridError",
    "KIND_CLASSICAL",
    "KIND_PASS",
    "METHOD_ELLIPTICAL",
    "METHOD_MONTE_CARLO",
    "OUTLIER_SCHEMES",
    "PairScores",
    "PassFpcaError",
    "RATIO_METHODS",
    "ReplicationResult",
    "SCHEME_PRE_SMOOTH",
    "SCHEME_SMOOTH_CF",
    "SCORE_LAWS",
    "SchemeMismatchError",
    "SimulationConfig",
    "SmoothingSpec",
    "SolverOptions",
    "ThresholdError",
    "align_sign",
    "collect_replicates",
    "config_label",
    "convergence_condition",
    "cpve",
    "derive_seed",
    "draw_scores",
    "eigendecompose",
    "eigenfunction_mse",
    "eigenratio_elliptical",
    "eigenratio_mc",
    "elliptical_expectation",
    "fourier_truth",
    "generate",
    "inject_outliers",
    "inner_product",
    "l2_norm",
    "make_grid",
    "mean_function",
    "mspc",
    "pair_scores",
    "pass_covariance",
    "presmooth",
    "pve_error",
    "rank_select",
    "remove_diagonal",
    "run_benchmark",
    "sample_covariance",
    "smooth_surface",
    "spatial_median",
    "truth_pve",
]
