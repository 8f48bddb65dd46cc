"""Synthesis of granular mortality tables.

Builds joint population tables from partial marginal data via iterative
proportional fitting, splits aggregate mortality rates into subgroup rates
consistent with relative-risk assumptions, quantifies sampling uncertainty
with Monte Carlo simulation of death counts, and transfers insured-versus-
population mortality relationships across countries with a penalized
Poisson regression.
"""

from .dataio import (
    build_manifest,
    load_config,
    read_json,
    read_model,
    read_table,
    sha256_digest,
    write_ci_rows,
    write_json,
    write_model,
    write_table,
)
from .errors import (
    ConstraintMismatchError,
    DegenerateBasisError,
    DegenerateTableError,
    InfeasibleConstraintsError,
    InfeasibleSplitError,
    InfeasibleUpdateError,
    InputError,
    InsufficientSampleError,
    InvalidIntensityError,
    InvalidSpecError,
    MortsynthError,
    RateOverflowError,
    SelectionFailedError,
    TableParseError,
    UnknownLevelError,
)
from .gam import (
    Design,
    DesignLayout,
    GamModel,
    InsuredPrediction,
    PredictionResult,
    SelectionResult,
    SmoothSpec,
    TargetRecord,
    TrainingRecord,
    build_design,
    fit_pirls,
    lambda_grid,
    model_from_dict,
    model_to_dict,
    poisson_deviance,
    predict_insured_rates,
    predict_rows,
    select_smoothing,
)
from .hazard import (
    HazardRatioSpec,
    RateTable,
    expected_deaths,
    implied_hazard_ratio,
    recombine,
    split_rates,
)
from .ipf import (
    IpfConfig,
    IpfResult,
    fit_within_groups,
    ipf_fit,
    ipf_update_step,
    max_marginal_deviation,
)
from .montecarlo import (
    ReplicateMatrix,
    SimulationConfig,
    SimulationSummary,
    aggregate_replicates,
    mc_standard_error,
    simulate,
    summarize,
)
from .pipelines import (
    ReportCheck,
    ScenarioInputs,
    ScenarioOutputs,
    ScenarioResult,
    ScenarioSpec,
    ValidationReport,
    load_scenario_spec,
    run_scenario,
    run_scenario_1,
    run_scenario_2,
    run_scenario_3,
    validate,
    write_outputs,
)
from .rng import (
    block_uniforms,
    philox4x32,
    poisson_matrix,
)
from .tables import (
    ContingencyTable,
    DimensionSpec,
    MarginalConstraint,
    canonical_dims,
    uniform_table,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "aggregate_replicates",
    "block_uniforms",
    "build_design",
    "build_manifest",
    "canonical_dims",
    "ConstraintMismatchError",
    "ContingencyTable",
    "DegenerateBasisError",
    "DegenerateTableError",
    "Design",
    "DesignLayout",
    "DimensionSpec",
    "expected_deaths",
    "fit_pirls",
    "fit_within_groups",
    "GamModel",
    "HazardRatioSpec",
    "implied_hazard_ratio",
    "InfeasibleConstraintsError",
    "InfeasibleSplitError",
    "InfeasibleUpdateError",
    "InputError",
    "InsufficientSampleError",
    "InsuredPrediction",
    "InvalidIntensityError",
    "InvalidSpecError",
    "ipf_fit",
    "ipf_update_step",
    "IpfConfig",
    "IpfResult",
    "lambda_grid",
    "load_config",
    "load_scenario_spec",
    "MarginalConstraint",
    "max_marginal_deviation",
    "mc_standard_error",
    "model_from_dict",
    "model_to_dict",
    "MortsynthError",
    "philox4x32",
    "poisson_deviance",
    "poisson_matrix",
    "predict_insured_rates",
    "predict_rows",
    "PredictionResult",
    "RateOverflowError",
    "RateTable",
    "read_json",
    "read_model",
    "read_table",
    "recombine",
    "ReplicateMatrix",
    "ReportCheck",
    "run_scenario",
    "run_scenario_1",
    "run_scenario_2",
    "run_scenario_3",
    "ScenarioInputs",
    "ScenarioOutputs",
    "ScenarioResult",
    "ScenarioSpec",
    "select_smoothing",
    "SelectionFailedError",
    "SelectionResult",
    "sha256_digest",
    "simulate",
    "SimulationConfig",
    "SimulationSummary",
    "SmoothSpec",
    "split_rates",
    "summarize",
    "TableParseError",
    "TargetRecord",
    "TrainingRecord",
    "uniform_table",
    "UnknownLevelError",
    "validate",
    "ValidationReport",
    "write_ci_rows",
    "write_json",
    "write_model",
    "write_outputs",
    "write_table",
]
