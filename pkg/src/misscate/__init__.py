"""Treatment effect estimation when covariates, treatment, and outcome can
all be missing not at random.

The package identifies conditional effects under one of three
conditional-independence restrictions on the outcome response indicator,
estimates them either nonparametrically (series-weighted two-stage fit) or by
a joint parametric likelihood, and ships the simulation benchmark, bootstrap
inference, and sensitivity analysis used to study both.
"""

from .baselines import cca_fit, miss_indicator_fit, oracle_fit
from .bootstrap import (
    BootstrapConfig,
    BootstrapResult,
    bootstrap_ci,
    bootstrap_estimate,
)
from .core import (
    CateEstimate,
    Columns,
    ConfigError,
    Dataset,
    Interval,
    Mechanism,
    MisscateError,
    MissingnessAssumption,
    Unit,
    VariableKind,
    Violation,
    as_columns,
    complete_cases,
    dataset_from_columns,
    mix_seed,
    read_dataset_csv,
    subset_observed_xt,
    validate_dataset,
    write_dataset_csv,
)
from .dgp import (
    CalibrationError,
    IndicatorModel,
    ScenarioConfig,
    SimulatedData,
    benchmark_scenario,
    calibrate_intercept,
    simulate,
    true_cate,
)
from .discrete import (
    CounterexampleReport,
    IdentifiedDistribution,
    InfeasibleOddsError,
    InstrumentRole,
    InsufficientVariationError,
    ObservedConditionals,
    RankCheck,
    RankDeficientError,
    cate_discrete,
    completeness_rank_check,
    estimate_observed_conditionals,
    identify_outcome_distribution,
    solve_response_odds,
    verify_counterexample_1,
    verify_counterexample_2,
)
from .em import (
    DegeneratePosteriorError,
    EmConfig,
    EmResult,
    Family,
    ImputationSet,
    MissingnessModel,
    OffsetTerm,
    OutcomeModel,
    default_missingness_design,
    default_outcome_design,
    design_matrix,
    e_step_exact_discrete,
    estimate_cate_param,
    fit_em,
    fit_initial_outcome,
    fractional_impute,
    model_mean,
)
from .glm import FitError
from .harness import StudyConfig, StudyResult, run_study
from .np2sls import (
    EstimationError,
    NpTuning,
    RegularizationConfig,
    SieveConfig,
    SolverError,
    build_first_stage,
    corrected_weights,
    estimate_cate_np,
    hermite_envelope_basis,
    plan_np,
    solve_regularized,
)
from .sensitivity import (
    SensitivityPoint,
    SensitivityResult,
    SensitivitySpec,
    sensitivity_curve,
    write_sensitivity_csv,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
