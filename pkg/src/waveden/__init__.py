"""Wavelet projection density estimation on the real line.

Linear and hard-thresholding wavelet density estimators, their integrated
distribution functions, Besov-smoothness test densities, and a seeded
Monte-Carlo harness that checks the estimators' limit behavior at desk
scale.
"""

from waveden.basis import (
    DEFAULT_RESOLUTION,
    DyadicTable,
    WaveletFamily,
    build_family,
    tabulate_phi,
    tabulate_psi,
    tabulate_primitive,
    check_orthonormality,
)
from waveden.kernel import (
    KernelContext,
    make_kernel_context,
    kernel_K,
    kernel_Kj,
    norm_squared,
    compute_D_bounds,
    project_density,
)
from waveden.coefficients import (
    Sample,
    CoefficientSet,
    read_sample,
    empirical_alpha,
    empirical_beta,
    exact_coefficients,
    deviation_stats,
)
from waveden.densities import (
    DensityModel,
    make_gaussian_mixture,
    make_besov_density,
    besov_norm,
    sample_density,
    bias_curve,
)
from waveden.estimators import (
    LinearEstimator,
    ThresholdEstimator,
    StepFunction,
    choose_j_optimal,
    fit_linear,
    fit_threshold,
    default_kappa,
    eval_density,
    cdf,
    integrate_against,
    sup_deviation_statistic,
    serialize_estimator,
    deserialize_estimator,
)
from waveden.experiments import (
    ExperimentConfig,
    ExperimentReport,
    EXPERIMENTS,
    default_config,
    run_experiment,
    kolmogorov_cdf,
)

__version__ = "0.1.0"
