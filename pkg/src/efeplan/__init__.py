"""Discrete-state active inference: EFE planning, exact inference, T-maze harness."""

from .model import (
    Categorical,
    GenerativeModel,
    History,
    Likelihood,
    LogPreferences,
    ModelFormatError,
    Policy,
    Transitions,
    ValidationReport,
    Violation,
    load_model,
    make_model,
    model_from_dict,
    model_to_dict,
    preference_obs_marginal,
    pullback_preferences,
    save_model,
    validate_model,
)
from .inference import (
    HorizonOverflow,
    MarginalBeliefs,
    PreferencePosterior,
    StateTrajectoryPosterior,
    ZeroEvidence,
    ZeroProbabilityObservation,
    conditional_state_posterior,
    enumerate_posterior,
    filter_and_smooth,
    predictive_observations,
    preferential_inference,
)
from .planning import (
    DimensionMismatch,
    EfeBreakdown,
    ObjectiveKind,
    PolicyPosterior,
    PolicySpaceOverflow,
    SelectionMode,
    TrajectoryObjective,
    action_marginal,
    alternative_objective,
    efe_breakdown,
    efe_table,
    enumerate_policies,
    policy_posterior,
    select_action,
    trajectory_objective,
)
from .envs import (
    Environment,
    StepAfterDone,
    MalformedTrajectory,
    TMazeEnv,
    TMazeParams,
    make_environment,
    score_trajectory,
    tmaze_model,
)
from .harness import (
    AgentSpec,
    BeliefTrace,
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    TrialError,
    TrialRecord,
    config_from_dict,
    derive_rng,
    load_config,
    run_experiment,
    run_trial,
    write_outputs,
)

__version__ = "0.1.0"
