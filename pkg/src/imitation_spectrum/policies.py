"""Finite-population imitation rules.

Two revision rules are provided, proportional imitation (PISAP, one sampled
peer) and double imitation (DISAP, two sampled peers), each usable with two
sampling scopes:

``Scope.GLOBAL``
    An SU may sample any other SU and compares payoffs of the iteration that
    was just played. A non-migrating SU keeps its channel.

``Scope.SAME_CHANNEL``
    An SU only samples SUs sharing its current channel (itself included) and
    compares the payoffs those SUs obtained one iteration earlier. The
    imitated strategy is therefore the channel a peer used one iteration
    earlier; an SU that does not switch returns to its own previous channel.
    This is the delayed rule whose mean-field limit is
    :func:`imitation_spectrum.dynamics.constrained_pi_map`.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .model import ChannelModel, NetworkState, su_payoffs


class Policy(str, enum.Enum):
    PISAP = "pisap"
    DISAP = "disap"


class Scope(str, enum.Enum):
    GLOBAL = "global"
    SAME_CHANNEL = "channel"


@dataclass(frozen=True)
class PolicyParams:
    """Imitation factor, threshold, payoff bounds and sampling scope.

    ``sigma=None`` picks the per-policy default: ``1 / (omega - alpha)`` for
    PISAP and ``0.25`` for DISAP. ``exploration`` is the probability that a
    channel-constrained SU jumps to a uniformly random channel instead of
    imitating; it is off by default.
    """

    sigma: float | None = None
    epsilon_u: float = 0.01
    omega: float = 1.0
    alpha: float = 0.0
    scope: Scope = Scope.GLOBAL
    exploration: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scope", Scope(self.scope))
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.epsilon_u >= 0:
            raise ValueError(f"epsilon_u must be nonnegative, got {self.epsilon_u}")
        if not self.alpha < self.omega:
            raise ValueError("payoff bounds need alpha < omega")
        if not 0 <= self.exploration <= 1:
            raise ValueError("exploration must be a probability")

    def sigma_for(self, policy) -> float:
        if self.sigma is not None:
            return self.sigma
        if Policy(policy) is Policy.PISAP:
            return 1.0 / (self.omega - self.alpha)
        return 0.25


@dataclass(frozen=True)
class MigrationDecision:
    target_channel: int | None
    probability: float


def q_factor(u, omega: float = 1.0, alpha: float = 0.0):
    """Payoff weight ``(2 - (u - alpha)/(omega - alpha)) / (omega - alpha)``."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < alpha - 1e-12) or np.any(u_arr > omega + 1e-12):
        raise ValueError(f"payoff outside [{alpha}, {omega}]")
    span = omega - alpha
    out = (2.0 - (u_arr - alpha) / span) / span
    return float(out) if out.ndim == 0 else out


def _q(u, omega, alpha):
    span = omega - alpha
    return (2.0 - (u - alpha) / span) / span


def pisap_probability(u_self, u_other, sigma: float, epsilon_u: float):
    """Vectorized PISAP switch probability toward the sampled peer."""
    u_self = np.asarray(u_self, dtype=float)
    u_other = np.asarray(u_other, dtype=float)
    p = np.clip(sigma * (u_other - u_self), 0.0, 1.0)
    return np.where(u_self < u_other - epsilon_u, p, 0.0)


def disap_probabilities(u_self, self_channel, u1, ch1, u2, ch2, sigma, epsilon_u,
                        omega=1.0, alpha=0.0):
    """Vectorized DISAP switch probabilities ``(p1, p2)``.

    Samples must already be ordered so that ``u1 <= u2``. ``p1`` is the
    probability of moving to ``ch1``, ``p2`` of moving to ``ch2``; the two
    always form a sub-distribution.
    """
    uj = np.asarray(u_self, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    ch1 = np.asarray(ch1)
    ch2 = np.asarray(ch2)
    qj, q1, q2 = _q(uj, omega, alpha), _q(u1, omega, alpha), _q(u2, omega, alpha)

    same_pair = ch1 == ch2
    low_is_own = (~same_pair) & (ch1 == np.asarray(self_channel))

    p1_same = 0.5 * sigma * np.maximum(q1 * (u1 - uj) + q2 * (u2 - uj), 0.0)
    p2_own = 0.25 * sigma * np.maximum(q1 * (u2 - u1) + qj * (u2 - u1), 0.0)
    p1_else = 0.5 * sigma * np.maximum(qj * (u1 - u2) + q2 * (u1 - uj), 0.0)
    # negative remainder clamped to 0
    p2_else = np.maximum(
        0.5 * sigma * np.maximum(q1 * (u2 - uj) + q2 * (u1 - uj), 0.0) - p1_else, 0.0)

    p1 = np.where(same_pair, p1_same, np.where(low_is_own, 0.0, p1_else))
    p2 = np.where(same_pair, 0.0, np.where(low_is_own, p2_own, p2_else))

    p1 = np.where(uj < u1 - epsilon_u, np.clip(p1, 0.0, 1.0), 0.0)
    p2 = np.where(uj < u2 - epsilon_u, np.clip(p2, 0.0, 1.0), 0.0)
    total = p1 + p2
    scale = np.where(total > 1.0, 1.0 / np.where(total > 0, total, 1.0), 1.0)
    return p1 * scale, p2 * scale


def pisap_decision(u_self: float, u_other: float, other_channel: int,
                   params: PolicyParams) -> MigrationDecision:
    p = float(pisap_probability(u_self, u_other, params.sigma_for(Policy.PISAP), params.epsilon_u))
    return MigrationDecision(other_channel if p > 0 else None, p)


def disap_decision(u_self: float, self_channel: int, sample1: tuple[float, int],
                   sample2: tuple[float, int], params: PolicyParams
                   ) -> tuple[MigrationDecision, MigrationDecision]:
    """Decisions toward the lower- and higher-payoff sample, in that order.

    ``sample1``/``sample2`` are ``(payoff, channel)`` pairs; they are swapped
    here if needed so that the first one has the lower payoff.
    """
    (u1, c1), (u2, c2) = sample1, sample2
    if u1 > u2:
        (u1, c1), (u2, c2) = (u2, c2), (u1, c1)
    for u in (u_self, u1, u2):
        q_factor(u, params.omega, params.alpha)
    p1, p2 = disap_probabilities(u_self, self_channel, u1, c1, u2, c2,
                                 params.sigma_for(Policy.DISAP), params.epsilon_u,
                                 params.omega, params.alpha)
    p1, p2 = float(p1), float(p2)
    return (MigrationDecision(c1 if p1 > 0 else None, p1),
            MigrationDecision(c2 if p2 > 0 else None, p2))


def _observed(state: NetworkState, channels: ChannelModel, params: PolicyParams, payoffs):
    """Payoffs/strategies compared by the rule, plus the just-played payoffs."""
    if payoffs is None:
        payoffs = su_payoffs(state.channel_now, channels)
    payoffs = np.asarray(payoffs, dtype=float)
    if params.scope is Scope.GLOBAL:
        return payoffs, state.channel_now, payoffs
    if np.isnan(state.payoff_prev).any():
        raise ValueError("channel-constrained imitation needs the previous iteration's payoffs")
    return state.payoff_prev, state.channel_prev, payoffs


def _draw_same_channel(channel_now: np.ndarray, n_channels: int, u: np.ndarray) -> np.ndarray:
    """Index of a uniformly drawn SU on each SU's current channel (self allowed)."""
    order = np.argsort(channel_now, kind="stable")
    counts = np.bincount(channel_now, minlength=n_channels)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    n_here = counts[channel_now]
    pick = np.minimum((u * n_here).astype(np.int64), n_here - 1)
    return order[starts[channel_now] + pick]


def policy_step(state: NetworkState, channels: ChannelModel, params: PolicyParams,
                policy, rng: np.random.Generator, payoffs=None) -> NetworkState:
    """One synchronous revision of every SU.

    ``payoffs`` are the payoffs realized on ``state.channel_now``; they
    default to the expected payoffs. All SUs decide from the same snapshot
    and move together. Random numbers are drawn as one ``(N, 3)`` block whose
    row ``j`` belongs to SU ``j``.
    """
    policy = Policy(policy)
    n = state.n_sus
    u_cmp, strat, u_now = _observed(state, channels, params, payoffs)
    sigma = params.sigma_for(policy)
    draws = rng.random((n, 3))
    idx = np.arange(n)

    if params.scope is Scope.GLOBAL:
        if n < (2 if policy is Policy.PISAP else 3):
            raise ValueError("not enough SUs to sample from")
        stay = state.channel_now
        k1 = np.minimum((draws[:, 0] * (n - 1)).astype(np.int64), n - 2)
        k1 += k1 >= idx
        if policy is Policy.DISAP:
            k2 = np.minimum((draws[:, 1] * (n - 2)).astype(np.int64), n - 3)
            lo, hi = np.minimum(idx, k1), np.maximum(idx, k1)
            k2 += k2 >= lo
            k2 += k2 >= hi
    else:
        stay = state.channel_prev
        k1 = _draw_same_channel(state.channel_now, state.n_channels, draws[:, 0])
        if policy is Policy.DISAP:
            k2 = _draw_same_channel(state.channel_now, state.n_channels, draws[:, 1])

    if policy is Policy.PISAP:
        p = pisap_probability(u_cmp, u_cmp[k1], sigma, params.epsilon_u)
        new = np.where(draws[:, 2] < p, strat[k1], stay)
    else:
        swap = (u_cmp[k1] > u_cmp[k2]) | ((u_cmp[k1] == u_cmp[k2]) & (k1 > k2))
        lo_k = np.where(swap, k2, k1)
        hi_k = np.where(swap, k1, k2)
        p1, p2 = disap_probabilities(u_cmp, strat, u_cmp[lo_k], strat[lo_k],
                                     u_cmp[hi_k], strat[hi_k], sigma, params.epsilon_u,
                                     params.omega, params.alpha)
        r = draws[:, 2]
        new = np.where(r < p1, strat[lo_k], np.where(r < p1 + p2, strat[hi_k], stay))

    if params.scope is Scope.SAME_CHANNEL and params.exploration > 0:
        extra = rng.random((n, 2))
        jump = extra[:, 0] < params.exploration
        rand_ch = np.minimum((extra[:, 1] * state.n_channels).astype(np.int64),
                             state.n_channels - 1)
        new = np.where(jump, rand_ch, new)

    return NetworkState(new, state.channel_now, u_now, state.iteration + 1, state.n_channels)


def _pisap_stable(pool_payoffs: np.ndarray, eps: float) -> bool:
    return not (pool_payoffs.min() < pool_payoffs.max() - eps)


def _disap_pool_stable(self_types, pool_types, global_scope: bool, sigma, params) -> bool:
    """Exhaustive scan over (self, sample, sample) type combinations.

    A type is ``(channel, payoff)`` with a multiplicity. Global sampling draws
    two distinct SUs other than self; channel-constrained sampling draws with
    replacement, self included.
    """
    for (s_ch, s_u), _ in self_types.items():
        avail = dict(pool_types)
        if global_scope:
            avail[(s_ch, s_u)] -= 1
        keys = [k for k, c in avail.items() if c > 0]
        for a, b in itertools.combinations_with_replacement(keys, 2):
            if global_scope and a == b and avail[a] < 2:
                continue
            orders = [(a, b), (b, a)] if a[1] == b[1] else [tuple(sorted((a, b), key=lambda t: t[1]))]
            for (c1, u1), (c2, u2) in orders:
                p1, p2 = disap_probabilities(s_u, s_ch, u1, c1, u2, c2, sigma,
                                             params.epsilon_u, params.omega, params.alpha)
                if (p1 > 0 and c1 != s_ch) or (p2 > 0 and c2 != s_ch):
                    return False
    return True


def _types(ch: np.ndarray, u: np.ndarray) -> dict:
    out: dict = {}
    for c, v in zip(ch.tolist(), u.tolist()):
        out[(c, v)] = out.get((c, v), 0) + 1
    return out


def is_imitation_stable(state: NetworkState, channels: ChannelModel, params: PolicyParams,
                        policy, payoffs=None) -> bool:
    """True iff no SU has a positive switch probability for any possible sample.

    Independent of the random draw: every sample within each SU's scope is
    considered.
    """
    policy = Policy(policy)
    u_cmp, strat, _ = _observed(state, channels, params, payoffs)
    eps = params.epsilon_u
    if params.scope is Scope.GLOBAL:
        pools = [np.arange(state.n_sus)]
    else:
        pools = [np.flatnonzero(state.channel_now == c) for c in range(state.n_channels)]
        pools = [p for p in pools if p.size]
    # all pools within eps: every rule is gated off
    if all(_pisap_stable(u_cmp[p], eps) for p in pools):
        return True
    if policy is Policy.PISAP:
        return False
    sigma = params.sigma_for(policy)
    glob = params.scope is Scope.GLOBAL
    for p in pools:
        types = _types(strat[p], u_cmp[p])
        if not _disap_pool_stable(types, types, glob, sigma, params):
            return False
    return True


def initial_state(n_sus: int, channels: ChannelModel, scope, rng: np.random.Generator
                  ) -> NetworkState:
    """Uniformly random start; two random iterations for channel-constrained runs.

    Returned state is at iteration 0 (global) or 1 (channel-constrained, with
    expected payoffs of iteration 0 recorded as history).
    """
    c = channels.n_channels
    first = rng.integers(0, c, size=n_sus)
    if Scope(scope) is Scope.GLOBAL:
        return NetworkState.from_channels(first, c, iteration=0)
    second = rng.integers(0, c, size=n_sus)
    return NetworkState(second, first, su_payoffs(first, channels), 1, c)
