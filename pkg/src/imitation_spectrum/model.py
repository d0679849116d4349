"""Spectrum access game: channels, payoffs, the equilibrium and its potential.

Secondary users (SUs) share C channels. Channel ``i`` is free of primary
activity with probability ``mu[i]``; the SUs parked on a free channel split it
evenly, so the normalized utility of an SU on channel ``i`` is
``mu[i] / n[i]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

PAYOFF_ATOL = 1e-12


@dataclass(frozen=True)
class ChannelModel:
    """Availability probabilities of the C licensed channels."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).copy()
        if mu.ndim != 1 or mu.size < 2:
            raise ValueError(f"need at least 2 channels, got mu={mu!r}")
        if not np.all((mu > 0) & (mu <= 1)):
            raise ValueError(f"availability probabilities must lie in (0, 1], got {mu!r}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def n_channels(self) -> int:
        return self.mu.size

    @cached_property
    def total(self) -> float:
        return float(self.mu.sum())


@dataclass(frozen=True)
class NetworkState:
    """Snapshot of a finite population after ``iteration`` has been played.

    ``channel_prev`` and ``payoff_prev`` describe iteration ``iteration - 1``.
    At the very first iteration there is no history: ``channel_prev`` mirrors
    ``channel_now`` and ``payoff_prev`` is NaN.
    """

    channel_now: np.ndarray
    channel_prev: np.ndarray
    payoff_prev: np.ndarray
    iteration: int = 0
    n_channels: int = field(default=0)

    def __post_init__(self):
        now = np.asarray(self.channel_now, dtype=np.int64).copy()
        prev = np.asarray(self.channel_prev, dtype=np.int64).copy()
        pay = np.asarray(self.payoff_prev, dtype=float).copy()
        if not (now.shape == prev.shape == pay.shape) or now.ndim != 1:
            raise ValueError("channel_now, channel_prev and payoff_prev must be equal-length vectors")
        n_channels = self.n_channels or int(max(now.max(), prev.max())) + 1
        for name, arr in (("channel_now", now), ("channel_prev", prev)):
            if arr.size and (arr.min() < 0 or arr.max() >= n_channels):
                raise ValueError(f"{name} holds indices outside [0, {n_channels})")
        if self.iteration < 0:
            raise ValueError("iteration must be nonnegative")
        for arr in (now, prev, pay):
            arr.setflags(write=False)
        object.__setattr__(self, "channel_now", now)
        object.__setattr__(self, "channel_prev", prev)
        object.__setattr__(self, "payoff_prev", pay)
        object.__setattr__(self, "n_channels", n_channels)

    @classmethod
    def from_channels(cls, channels, n_channels: int, iteration: int = 0) -> "NetworkState":
        """State with no history yet."""
        channels = np.asarray(channels, dtype=np.int64)
        return cls(channels, channels, np.full(channels.size, np.nan), iteration, n_channels)

    @property
    def n_sus(self) -> int:
        return self.channel_now.size

    def counts(self) -> np.ndarray:
        return np.bincount(self.channel_now, minlength=self.n_channels)

    def prev_counts(self) -> np.ndarray:
        return np.bincount(self.channel_prev, minlength=self.n_channels)

    def migration_counts(self) -> np.ndarray:
        """``out[j, l]``: SUs on channel ``j`` now that were on ``l`` before."""
        c = self.n_channels
        flat = np.bincount(self.channel_now * c + self.channel_prev, minlength=c * c)
        return flat.reshape(c, c)


def expected_payoff(mu_i, n_i):
    """Normalized throughput ``mu_i / n_i`` of each SU sharing a channel.

    Works elementwise on arrays. Querying an empty channel is a caller bug.
    """
    n_i = np.asarray(n_i)
    if np.any(n_i < 1):
        raise ValueError("payoff of an empty channel is undefined")
    out = np.asarray(mu_i, dtype=float) / n_i
    return float(out) if out.ndim == 0 else out


def su_payoffs(channel_now: np.ndarray, channels: ChannelModel) -> np.ndarray:
    """Expected payoff of every SU given the channel assignment."""
    counts = np.bincount(channel_now, minlength=channels.n_channels)
    return channels.mu[channel_now] / counts[channel_now]


def nash_equilibrium(channels: ChannelModel) -> np.ndarray:
    """Population split ``mu_i / sum(mu)`` at the unique (large-N) equilibrium."""
    return channels.mu / channels.mu.sum()


def potential(x, channels: ChannelModel, n_sus: int, eps0: float = 1e-6) -> float:
    """Congestion-game potential ``sum_i (mu_i / N) (log x_i - log eps0)``.

    ``eps0`` only shifts the value; it plays no role in the gradient.
    """
    x = np.asarray(x, dtype=float)
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    if np.any(x <= 0):
        raise ValueError("potential is only defined on the interior of the simplex")
    return float(np.sum(channels.mu / n_sus * (np.log(x) - np.log(eps0))))


def potential_gradient(x, channels: ChannelModel, n_sus: int) -> np.ndarray:
    """Partial derivatives of :func:`potential`, i.e. the per-channel payoffs."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("potential is only defined on the interior of the simplex")
    return channels.mu / (x * n_sus)


def best_deviation_gain(counts, channels: ChannelModel) -> float:
    """Largest payoff gain any single SU can get by switching channel.

    A deviator joining channel ``l`` sees ``mu_l / (n_l + 1)``; an empty
    target therefore yields ``mu_l``.
    """
    counts = np.asarray(counts)
    mu = channels.mu
    occupied = counts > 0
    if not occupied.any():
        return 0.0
    current = np.full(mu.size, np.inf)
    current[occupied] = mu[occupied] / counts[occupied]
    joined = mu / (counts + 1)
    # gain[i, l]: SU leaving i for l
    gain = joined[None, :] - current[:, None]
    np.fill_diagonal(gain, -np.inf)
    gain[~occupied, :] = -np.inf
    return float(gain.max())


def epsilon_ne_check(state, channels: ChannelModel, eps: float) -> bool:
    """True if no SU can gain more than ``eps`` by a unilateral switch.

    ``state`` may be a :class:`NetworkState` or a vector of channel counts.
    """
    counts = state.counts() if isinstance(state, NetworkState) else np.asarray(state)
    return best_deviation_gain(counts, channels) <= eps + PAYOFF_ATOL


def jain_index(allocations) -> float:
    """Jain's fairness index ``(sum a)^2 / (n * sum a^2)``."""
    a = np.asarray(allocations, dtype=float)
    if a.size == 0 or np.any(a < 0):
        raise ValueError("allocations must be a nonempty nonnegative vector")
    sq = np.dot(a, a)
    if sq == 0:
        raise ValueError("Jain index undefined for an all-zero allocation")
    return float(a.sum() ** 2 / (a.size * sq))
