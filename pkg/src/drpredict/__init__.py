"""drpredict: distributionally robust treatment-effect prediction.

Point estimation of average treatment effects, sharp/Neyman bounds on the
treatment-effect variance, minimax-robust effect predictions under
divergence-ball ambiguity, large-sample inference, and simulation /
calibration utilities.
"""

from .bounds import (
    BoundsMethod,
    VarianceBounds,
    merged_u_grid,
    neyman_bounds,
    sharp_bounds_empirical,
    sharp_bounds_population,
)
from .calibration import (
    RadiusBenchmark,
    SplitRule,
    shift_decomposition,
    split_benchmark,
    wasserstein2_1d,
)
from .covariance import (
    Loadings,
    NearEqualVariancesWarning,
    SigmaMatrix,
    SigmaMethod,
    conditional_sd_grid,
    loadings,
    prediction_sds,
    sigma_bootstrap,
    sigma_neyman,
    sigma_sharp,
    zero_tau_limit_sd,
)
from .exceptions import (
    ConvergenceError,
    DegenerateSample,
    DensityError,
    DomainError,
    DrPredictError,
    InsufficientData,
    OrderError,
    ParseError,
    UnsupportedConfig,
    UnsupportedRegime,
    ValidationError,
    ZeroTauError,
)
from .inference import (
    IMMethod,
    IntervalEstimate,
    RobustEstimates,
    estimate_robust,
    im_interval,
    plain_im_interval,
    two_step_interval,
)
from .moments import (
    ArmMoments,
    estimate_ate_diff_means,
    estimate_ate_ipw,
    estimate_moments,
)
from .sample import (
    EmpiricalDistribution,
    ExperimentalSample,
    empirical_cdf,
    empirical_quantile,
    load_sample,
)
from .simulation import (
    GaussianDGP,
    PopulationTruth,
    SimulationReport,
    case_preset,
    draw_sample,
    population_truth,
    run_coverage_study,
    write_reports_csv,
    write_reports_json,
)
from .solver import (
    BoundEstimates,
    RobustConfig,
    SweepPoint,
    dual_objective,
    homogeneous_threshold,
    penalty_derivs,
    predict_bounds,
    proximity_derivs,
    solve_minimax,
    solve_minimax_many,
    sweep_delta,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # exceptions
    "DrPredictError",
    "ParseError",
    "ValidationError",
    "DomainError",
    "InsufficientData",
    "ConvergenceError",
    "ZeroTauError",
    "UnsupportedRegime",
    "UnsupportedConfig",
    "OrderError",
    "DensityError",
    "DegenerateSample",
    # data model
    "ExperimentalSample",
    "EmpiricalDistribution",
    "load_sample",
    "empirical_cdf",
    "empirical_quantile",
    # moments
    "ArmMoments",
    "estimate_moments",
    "estimate_ate_diff_means",
    "estimate_ate_ipw",
    # variance bounds
    "BoundsMethod",
    "VarianceBounds",
    "neyman_bounds",
    "sharp_bounds_empirical",
    "sharp_bounds_population",
    "merged_u_grid",
    # minimax solver
    "RobustConfig",
    "BoundEstimates",
    "SweepPoint",
    "dual_objective",
    "proximity_derivs",
    "penalty_derivs",
    "homogeneous_threshold",
    "solve_minimax",
    "solve_minimax_many",
    "predict_bounds",
    "sweep_delta",
    # asymptotic covariance
    "SigmaMethod",
    "SigmaMatrix",
    "Loadings",
    "NearEqualVariancesWarning",
    "sigma_neyman",
    "sigma_sharp",
    "sigma_bootstrap",
    "loadings",
    "prediction_sds",
    "conditional_sd_grid",
    "zero_tau_limit_sd",
    # inference
    "IMMethod",
    "IntervalEstimate",
    "RobustEstimates",
    "im_interval",
    "estimate_robust",
    "plain_im_interval",
    "two_step_interval",
    # simulation
    "GaussianDGP",
    "PopulationTruth",
    "SimulationReport",
    "case_preset",
    "draw_sample",
    "population_truth",
    "run_coverage_study",
    "write_reports_csv",
    "write_reports_json",
    # calibration
    "SplitRule",
    "RadiusBenchmark",
    "wasserstein2_1d",
    "shift_decomposition",
    "split_benchmark",
]
