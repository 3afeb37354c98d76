"""Active identification of linear systems from a finite hypothesis class."""
from .lti import (
    DimensionError,
    LinearSystem,
    NoiseModel,
    Scenario,
    Trajectory,
    prediction_error,
    prediction_errors,
    sample_isotropic_input,
    simulate,
)
from .geometry import (
    DistinguishabilityProfile,
    PECoefficients,
    ToeplitzPair,
    build_profile,
    build_toeplitz,
    eta_bound,
    expected_error,
    pe_algorithm,
    pe_optimal,
    pe_random,
    sigma_delta,
)
from .design import (
    ExcitationPlan,
    MixtureSolution,
    MixtureSolverError,
    design_ce_input,
    design_oracle_input,
    minimize_mixture,
)
from .bounds import BenefitDiagnostic, LowerBoundReport, benefit, lower_bound_lhs, min_horizon
from .identification import (
    EpisodeRecord,
    IdentificationResult,
    RhoSchedule,
    StrategyConfig,
    design_episode_input,
    exp_weights,
    rho_value,
    run_identification,
    termination_check,
)
from .harness import ExperimentSpec, RunRow, builtin_scenario, run_experiment, summarize

__all__ = [name for name in dir() if not name.startswith("_")]
