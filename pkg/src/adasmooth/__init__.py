"""adasmooth: data-adaptive smoothing-level selection for non-smooth functionals.

Estimate parameters that may not be pathwise differentiable (a density at a
point, a truncated counterfactual mean, a counterfactual dose-response value)
by (1) embedding them in a smooth family indexed by a smoothing level delta,
(2) estimating the bias/variance rates of that family from slow anchor
sequences on a sample split, (3) picking the mean-squared-error-optimal delta
with a small undersmoothing safety margin, and (4) reporting a one-step
estimate with a confidence interval at the selected level.
"""

from .core import (
    SCHEMA_SCALAR,
    SCHEMA_WAY,
    Dataset,
    Observation,
    SplitPlan,
    derive_rng,
    derive_seed,
    empirical_centered_second_moment,
    empirical_mean,
    read_dataset_csv,
    scalar_dataset,
    three_way_split,
    way_dataset,
    write_dataset_csv,
)
from .dgps import (
    BinaryTreatmentDGP,
    DoseResponseDGP,
    ScalarNormalDGP,
    ScalarUniformDGP,
)
from .errors import AdaSmoothError
from .estimator import (
    AdaptiveConfig,
    AdaptiveDiagnostics,
    EstimateReport,
    TmleReport,
    cv_tmle,
    cv_tmle_report,
    estimate_adaptive,
    one_step,
    wald_ci,
)
from .families import (
    KIND_COUNTERFACTUAL,
    KIND_DENSITY,
    KIND_DOSE_RESPONSE,
    FamilyEvaluator,
    NuisanceFit,
    SmoothedFamily,
    default_feasible_max,
    fit_nuisance,
    gradient,
    gradient_values,
    psi_plugin,
)
from .kernels import (
    Kernel,
    epanechnikov,
    gaussian,
    kernel_by_name,
    kernel_l2sq,
    kernel_quadrature_nodes,
    make_higher_order,
    scaled_kernel_eval,
    uniform,
)
from .oracle import (
    DeltaStarResult,
    SmoothedTruth,
    TruthBundle,
    delta_star_power_law,
    oracle_delta_star,
    true_b0,
    true_psi,
    true_sigma_inf,
    true_smoothed_psi,
    truth_bundle,
)
from .selector import (
    DEFAULT_EPSILON,
    AnchorConfig,
    RateEstimates,
    SmoothingSelection,
    cv_psi_hat,
    default_anchors,
    estimate_rates,
    finite_diff_b_prime,
    finite_diff_sigma_prime,
    rates_from_curves,
    scan_anchors,
    select_smoothing,
    sigma_hat,
)
from .sim import (
    DEFAULT_N_GRID,
    DEFAULT_REPS,
    BenchmarkRow,
    BenchmarkTable,
    ReplicateRecord,
    SelectorSpec,
    run_benchmark,
    sample_dgp,
)

__version__ = "0.1.0"

__all__ = [
    "SCHEMA_SCALAR",
    "SCHEMA_WAY",
    "Dataset",
    "Observation",
    "SplitPlan",
    "derive_rng",
    "derive_seed",
    "empirical_centered_second_moment",
    "empirical_mean",
    "read_dataset_csv",
    "scalar_dataset",
    "three_way_split",
    "way_dataset",
    "write_dataset_csv",
    "BinaryTreatmentDGP",
    "DoseResponseDGP",
    "ScalarNormalDGP",
    "ScalarUniformDGP",
    "AdaSmoothError",
    "AdaptiveConfig",
    "AdaptiveDiagnostics",
    "EstimateReport",
    "TmleReport",
    "cv_tmle",
    "cv_tmle_report",
    "estimate_adaptive",
    "one_step",
    "wald_ci",
    "KIND_COUNTERFACTUAL",
    "KIND_DENSITY",
    "KIND_DOSE_RESPONSE",
    "FamilyEvaluator",
    "NuisanceFit",
    "SmoothedFamily",
    "default_feasible_max",
    "fit_nuisance",
    "gradient",
    "gradient_values",
    "psi_plugin",
    "Kernel",
    "epanechnikov",
    "gaussian",
    "kernel_by_name",
    "kernel_l2sq",
    "kernel_quadrature_nodes",
    "make_higher_order",
    "scaled_kernel_eval",
    "uniform",
    "DeltaStarResult",
    "SmoothedTruth",
    "TruthBundle",
    "delta_star_power_law",
    "oracle_delta_star",
    "true_b0",
    "true_psi",
    "true_sigma_inf",
    "true_smoothed_psi",
    "truth_bundle",
    "DEFAULT_EPSILON",
    "AnchorConfig",
    "RateEstimates",
    "SmoothingSelection",
    "cv_psi_hat",
    "default_anchors",
    "estimate_rates",
    "finite_diff_b_prime",
    "finite_diff_sigma_prime",
    "rates_from_curves",
    "scan_anchors",
    "select_smoothing",
    "sigma_hat",
    "DEFAULT_N_GRID",
    "DEFAULT_REPS",
    "BenchmarkRow",
    "BenchmarkTable",
    "ReplicateRecord",
    "SelectorSpec",
    "run_benchmark",
    "sample_dgp",
    "__version__",
]
