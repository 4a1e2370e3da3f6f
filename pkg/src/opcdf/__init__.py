"""Off-policy estimation and high-confidence bounds for return distributions.

The package estimates the cumulative distribution of returns that an
evaluation policy would obtain, using episodes logged under other
(behavior) policies, and derives bounds on distributional parameters
(mean, variance, quantiles, CVaR, inter-quantile range, entropy) that all
hold together with a chosen confidence.
"""

from .band import (
    ConfidenceBand,
    KeyPointPlan,
    Specialize,
    band_from_intervals,
    build_band,
    optimize_plan,
    shift_band,
    split_train_eval,
    uniform_plan,
)
from .bootstrap import bca_bounds
from .bounds import (
    Bounds,
    cvar_bounds,
    entropy_bounds,
    entropy_upper_bound,
    generic_bounds,
    interquantile_bounds,
    mean_bounds,
    parameter_bounds,
    quantile_bounds,
    variance_bounds,
)
from .concentration import CiKind, CiMethod, ci_lower, ci_upper
from .envs import chain_env, chain_policies, generate_dataset, gridworld, recommender
from .experiments import BandSettings, coverage_sweep, derive_seed, stationary_band
from .nonstat import forecast_band, forecast_cdf_point, per_episode_cdf_points, wild_bootstrap_ci
from .oracle import bruteforce_bound, enumerate_return_cdf
from .returns import (
    CVaR,
    Entropy,
    InterQuantileRange,
    Mean,
    Parameter,
    Quantile,
    ReturnDataset,
    ReturnSample,
    StepCdf,
    Variance,
    discrete_pmf,
    estimate_cdf,
    estimate_cdf_is,
    estimate_cdf_wis,
    inverse_cdf,
    is_mean,
    parse_parameter,
    plugin_cvar,
    plugin_entropy,
    plugin_mean,
    plugin_quantile,
    plugin_variance,
)

__version__ = "0.1.0"
