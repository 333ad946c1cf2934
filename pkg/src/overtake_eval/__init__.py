"""Rare-event testing workbench for two-lane overtaking scenarios.

Estimates an automated vehicle's accident rate in a three-vehicle cut-in
scenario three ways: plain naturalistic Monte Carlo, criticality-driven
importance sampling, and a regression-adjusted variant that shrinks the
variance with sparse control variates built from the logged importance
densities.  A brute-force enumeration oracle provides the reference value
the estimators are checked against.
"""

__version__ = "0.1.0"

from .scenario import (
    Action,
    LANE_CHANGE,
    Phase,
    ScenarioState,
    Termination,
    Trajectory,
    VehicleState,
    check_termination,
    cutin_outcome,
    derive_state,
    is_accident,
    run_trajectory,
    step,
    step_raw,
)
from .models import (
    ActionDistribution,
    FvdmParams,
    IdmParams,
    MobilParams,
    NonPositiveGap,
    SurrogateModel,
    WrongPhase,
    ZeroDensity,
    bv_car_following_accel,
    default_surrogates,
    fvdm_accel,
    idm_accel,
    idm_follower,
    mobil_right_lc_prob,
    nde_action_dist,
)
from .criticality import (
    CriticalityEvaluator,
    CriticalityProfile,
    criticality,
    importance_fn,
    maneuver_challenge,
    mixture_importance,
)
from .config import (
    CampaignConfig,
    ConfigError,
    InitialStateParams,
    ScenarioConfig,
    load_config,
    write_default_config,
)
from .sampling import (
    CriticalMoment,
    TestRecord,
    episode_seed,
    sample_initial_state,
    sample_nade_batch,
    sample_nade_episode,
    sample_nde_batch,
    sample_nde_episode,
)
from .estimators import (
    EmptyGroup,
    EmptyInput,
    Estimate,
    GroupedRegression,
    ZeroEstimate,
    build_group,
    convergence_series,
    estimate_atscv,
    estimate_nade,
    estimate_nde,
    fit_atscv,
    mlr_fit,
    rhw,
    tests_to_threshold,
)
from .oracle import BudgetExceeded, brute_force_mu, conditional_mu
from .harness import (
    CampaignResult,
    MethodResult,
    SUMMARY_SCHEMA,
    build_summary,
    emit_outputs,
    estimate_from_records,
    load_campaign_records,
    run_campaign,
    run_replications,
    sample_env,
)
