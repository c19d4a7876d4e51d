"""Joint confounder screening and sparse-plus-low-rank regression.

The package estimates the association between a scalar outcome and a 2D
matrix exposure while adjusting for ultra-high-dimensional covariates.
Step one screens covariates by combining marginal outcome scores with
operator-norm exposure scores (optionally block-averaged); step two
solves an L1 plus nuclear-norm penalized regression on the screened set
with an accelerated proximal-gradient solver, tuned by five-fold
cross-validation with a one-standard-error rule.
"""

__version__ = "0.1.0"

from .dataset import Dataset, GroundTruth, gradient, objective, standardize
from .exceptions import (
    BadGridSize,
    BadK,
    BadMethod,
    BadTarget,
    ConstantColumn,
    DegenerateGrid,
    DimensionMismatch,
    EmptySet,
    EmptyTruth,
    NoConvergence,
    NumericalError,
    ParseError,
    PatternOverflow,
    SizeMismatch,
    SlrsError,
    SvdFailure,
    TooFewSamples,
    TooSmall,
    ValidationError,
    ZeroVariance,
)
from .screening import (
    BlockPartition,
    CoverageCurves,
    ScreenResult,
    ScreenScores,
    block_average,
    blockwise_screen,
    coverage_curve,
    coverage_from_scores,
    default_target,
    joint_screen,
    joint_screen_ratio,
    marginal_exposure_scores,
    marginal_outcome_scores,
    operator_norm,
    screen,
    screen_scores,
    select_screen,
    select_top_k,
)
from .solver import FitResult, SolverOptions, fit, soft_threshold, step_size, svt
from .tuning import (
    CvTable,
    cross_validate,
    cv_fit,
    fit_no_lasso,
    fit_oracle,
    lambda2_grid,
    lambda_grid,
    one_se_select,
    penalty_maxima,
)
from .simulate import (
    LdConfig,
    Scenario,
    ScenarioConfig,
    gen_ar1_design,
    gen_exposures,
    gen_ld_genotypes,
    gen_outcomes,
    make_coefficient_images,
    make_scenario,
    paper_ld_config,
    plant_truth,
    replicate_seed,
)
from .metrics import (
    MetricReport,
    PermutationTestResult,
    SelectionRates,
    coverage_proportion,
    evaluate_fit,
    mse_B,
    mse_beta,
    permutation_test,
    r_squared,
    sensitivity_specificity,
)
from .bench import Method, StudyReport, StudySpec, coverage_study, run_study
