"""orthocmr: cross-fitted orthogonal-score estimation for conditional moment
restrictions, with a naive two-stage baseline, synthetic generators with
ground truth, and diagnostics (orthogonality certificate, convergence-rate
studies, ill-posedness estimate)."""

from .basis import PolynomialBasis, TensorRadialBasis, build_basis
from .benchmark import BenchmarkReport, benchmark, make_dataset, reports_to_csv, write_benchmark_artifacts
from .config import ConfigError, config_hash, load_config
from .crossfit import CrossFitState, build_density, build_regressor, crossfit_nuisances, full_sample_nuisances
from .datasets import (
    Dataset,
    DemandIVParams,
    LinearToyParams,
    PCLDemandParams,
    SemiSyntheticParams,
    Standardiser,
    fit_standardiser,
    gen_demand_iv,
    gen_linear_toy,
    gen_pcl_demand,
    gen_semi_synthetic,
    ingest_csv,
    write_csv,
)
from .densities import (
    BinnedCategoricalDensity,
    GaussianMixtureDensity,
    GaussianMixtureParams,
    HomoscedasticGaussianDensity,
    mixture_expectation,
)
from .fit import (
    BoostedTreeStructural,
    FeedforwardStructural,
    FitConfig,
    FitError,
    FittedCMR,
    LinearInBasis,
    build_structural,
    fit_ce_dml_cmr,
    fit_dml_cmr,
    fit_naive_two_stage,
    fit_with_state,
    predict_structural,
)
from .folds import FoldPlan, make_fold_plan
from .illposedness import (
    IllPosednessEstimate,
    LinearFamilyProblem,
    demand_identification_problem,
    ill_posedness_estimate,
    toy_identification_problem,
)
from .oracles import (
    TruthOracle,
    demand_truth_oracle,
    mse_vs_truth,
    mse_vs_truth_both_units,
    pcl_a_grid,
    pcl_average_bridge,
    pcl_bridge_truth,
    pcl_do_oracle,
    toy_truth_oracle,
)
from .problems import confounded_linear_gaussian_toy, linear_gaussian_toy, toy_exact_nuisances
from .rates import RateStudyResult, debias_study, nuisance_rate_study, rate_study
from .regressors import BoostedTrees, ConstantPredictor, FeedforwardNet, RidgeOnBasis
from .rng import derive_seed, make_rng
from .score import (
    DerivativeEstimate,
    MCConfig,
    NuisancePair,
    PerturbationDirection,
    ScoreKind,
    gateaux_derivative,
    pointwise_loss_batch,
    score_value,
    standard_directions,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
