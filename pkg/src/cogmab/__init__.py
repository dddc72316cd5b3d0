"""Multi-user channel-selection bandits: policies, simulator and bounds."""
from .analysis import (
    AbsorptionSpec, Diverges, asymptotic_lower_bound, compositions_bound, compute_regret,
    exact_absorption_time, finite_time_upper_bound, kl_bernoulli, markov_absorption_oracle,
    optimal_reward,
)
from .harness import (
    ConfigError, ExperimentConfig, default_mu, fixed_ratio_sweep, run_experiment,
    run_reference, run_replication, sweep,
)
from .indices import UserBeliefState, g_mean, g_opt, index_scores
from .model import ChannelParams, InputDomainError, RunLedger
from .policies import POLICIES, PolicyState, make_threshold

__version__ = "0.1.0"
