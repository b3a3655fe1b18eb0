"""Simulation and numerics for one-dimensional excited (cookie) random walks.

The package samples the walk and its associated branching process with
migration, computes exact small-instance laws by dynamic programming, builds
the large-deviation rate functions for cycle means, hitting times, and
positions, and estimates heavy-tail/slowdown exponents, all behind a
reproducible counter-based RNG scheme and a CLI harness.
"""

from .environment import (
    CookieEnvironment,
    CookieVector,
    RegimeReport,
    env_ballistic,
    env_fair,
    env_single_07,
    env_sublinear,
)
from .branching import (
    CoinSite,
    RegenBatch,
    RegenSample,
    SpeedEstimate,
    estimate_speed_regen,
    hitting_time_representation_samples,
    hitting_time_via_representation,
    mean_cycle_ratio,
    sample_absorbed_total,
    sample_regeneration,
    sample_regenerations,
    step_v,
)
from .walk import (
    HittingResult,
    ProbabilityEstimate,
    WalkState,
    backtrack_probability,
    backtrack_profile,
    estimate_speed,
    hitting_time,
    hitting_times,
    simulate_position,
    simulate_positions,
    slowdown_event_probability,
)
from .oracle import (
    ExactLaw,
    MgfBracket,
    ballistic_escape_lower_bound,
    enumerate_paths,
    exact_mgf,
    first_passage_before_backstep,
    hitting_law,
    hitting_representation_law,
    lambda_v_exact,
    offspring_row,
    sigma_w_law,
    transition_row,
    v_zero_probabilities,
)
from .ratefn import (
    EmpiricalMGF,
    RateCurve,
    RateFamily,
    build_lambda_curve,
    build_rate_family,
    check_properties,
    default_lambda_grid,
    lambda_v,
    legendre,
    rate_T,
    rate_X,
)
from .tails import (
    TailFit,
    exponential_rate_fit,
    heavy_sum_exponent,
    hill_estimate,
    pareto_samples,
    slowdown_exponent_T,
    slowdown_exponent_X,
)
from .config import ExperimentConfig, load_config, parse_config

__version__ = "0.1.0"
