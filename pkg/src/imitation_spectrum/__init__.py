"""Imitation-based spectrum access for cognitive radio networks.

Finite-population imitation policies (proportional and double imitation,
with or without the same-channel sampling constraint), their mean-field
dynamics, the congestion-game equilibrium, and a Monte Carlo engine.
"""

from .model import (
    ChannelModel,
    NetworkState,
    epsilon_ne_check,
    expected_payoff,
    jain_index,
    nash_equilibrium,
    potential,
    potential_gradient,
)
from .policies import (
    MigrationDecision,
    Policy,
    PolicyParams,
    Scope,
    disap_decision,
    is_imitation_stable,
    pisap_decision,
    policy_step,
    q_factor,
)
from .dynamics import (
    DynamicsConfig,
    aggregate_closed_form,
    aggregate_monotone_rhs,
    constrained_di_map,
    constrained_pi_map,
    double_aggregate_step,
    double_replicator_step,
    integrate,
    phase_portrait,
    replicator_closed_form,
    replicator_rhs,
)
from .sim import PayoffMode, RunTrace, SimConfig, convergence_bound_check, fairness_series, run_batch, run_once

__version__ = "0.1.0"
