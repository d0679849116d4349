"""Mean-field (large population) dynamics of the imitation rules.

With ``pi_i = mu_i / (x_i N)`` every flow here collapses to an affine
function of ``x`` because ``x_i * pi_i = mu_i / N`` and the population
average payoff ``pibar = sum(mu) / N`` is constant on the simplex. The
affine forms are used throughout; they stay well defined when a coordinate
touches zero.

Discrete channel-constrained maps act on a migration matrix ``m`` with
``m[j, l]`` the share of the population on channel ``j`` now that was on
channel ``l`` one iteration earlier.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ChannelModel, nash_equilibrium

FLOOR = 1e-15


class SimplexClampWarning(RuntimeWarning):
    """A discrete map pushed a coordinate below zero and was clamped."""


class IntegrationError(FloatingPointError):
    pass


@dataclass(frozen=True)
class DynamicsConfig:
    n_sus: int = 50
    sigma: float = 1.0
    omega: float = 1.0
    alpha: float = 0.0
    dt: float = 0.01
    t_max: float = 100.0
    convergence_tol: float = 1e-9

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.alpha < self.omega:
            raise ValueError("need alpha < omega")
        if self.n_sus < 1:
            raise ValueError("n_sus must be positive")


def channel_payoffs(x, channels: ChannelModel, n_sus: int) -> np.ndarray:
    """Expected per-SU payoff ``mu_i / (x_i N)``; infinite on empty channels."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > 0, channels.mu / (np.where(x > 0, x, 1.0) * n_sus), np.inf)


def average_payoff(channels: ChannelModel, n_sus: int) -> float:
    return channels.total / n_sus


def aggregate_gain(cfg: DynamicsConfig, channels: ChannelModel) -> float:
    """Speed-up factor ``[1 + (omega - pibar)/(omega - alpha)] / (omega - alpha)``."""
    span = cfg.omega - cfg.alpha
    pibar = average_payoff(channels, cfg.n_sus)
    return (1.0 + (cfg.omega - pibar) / span) / span


def replicator_rhs(x, cfg: DynamicsConfig, channels: ChannelModel) -> np.ndarray:
    """``sigma * x_i * (pi_i - pibar)`` written as ``sigma*(mu_i/N - x_i*pibar)``."""
    n = cfg.n_sus
    return cfg.sigma * (channels.mu / n - np.asarray(x, dtype=float) * (channels.total / n))


def aggregate_monotone_rhs(x, cfg: DynamicsConfig, channels: ChannelModel) -> np.ndarray:
    """Replicator velocity scaled by :func:`aggregate_gain`."""
    return aggregate_gain(cfg, channels) * replicator_rhs(x, cfg, channels)


def _closed_form(x0, t, rate, channels):
    x0 = np.asarray(x0, dtype=float)
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    x_star = nash_equilibrium(channels)
    decay = np.exp(-rate * np.asarray(t, dtype=float))
    return np.multiply.outer(decay, x0 - x_star) + x_star


def replicator_closed_form(x0, t, cfg: DynamicsConfig, channels: ChannelModel) -> np.ndarray:
    """Exact solution ``K_i exp(-sigma*pibar*t) + x*_i`` of the replicator flow.

    ``t`` may be a scalar or an array of times (one row per time).
    """
    rate = cfg.sigma * average_payoff(channels, cfg.n_sus)
    return _closed_form(x0, t, rate, channels)


def aggregate_closed_form(x0, t, cfg: DynamicsConfig, channels: ChannelModel) -> np.ndarray:
    """Exact solution of the aggregate monotone flow, one constant per channel."""
    rate = cfg.sigma * average_payoff(channels, cfg.n_sus) * aggregate_gain(cfg, channels)
    return _closed_form(x0, t, rate, channels)


def _project(x: np.ndarray) -> np.ndarray:
    x = np.maximum(x, FLOOR)
    return x / x.sum(axis=-1, keepdims=True)


def integrate(rhs: Callable[[np.ndarray], np.ndarray], x0, cfg: DynamicsConfig,
              t_max: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step classical RK4 on the simplex.

    Returns ``(times, states)`` with ``states[k]`` the mixture at
    ``times[k]``. Each state is floored at 1e-15 and renormalized. ``x0``
    may be a stack of mixtures (one per row), integrated side by side.
    """
    t_max = cfg.t_max if t_max is None else t_max
    h = cfg.dt
    steps = int(round(t_max / h))
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    for k in range(steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not x.min() >= -1e-6:  # also trips on NaN
            raise IntegrationError(f"integration blew up at step {k + 1}: x={x}")
        x = _project(x)
        out[k + 1] = x
    return np.arange(steps + 1) * h, out


def _clamp(x: np.ndarray, what: str) -> np.ndarray:
    if x.min() < 0:
        warnings.warn(f"{what} left the simplex (min={x.min():.3g}); clamped",
                      SimplexClampWarning, stacklevel=3)
        x = np.maximum(x, 0.0)
        x = x / x.sum(axis=-1, keepdims=True)
    return x


def double_replicator_step(x_prev, cfg: DynamicsConfig, channels: ChannelModel) -> np.ndarray:
    """``x + sigma*x*(pi - pibar)``: one step of either interleaved copy.

    Accepts a stack of mixtures (one per row).
    """
    x_prev = np.asarray(x_prev, dtype=float)
    return _clamp(x_prev + replicator_rhs(x_prev, cfg, channels), "double replicator")


def double_aggregate_step(x_prev, cfg: DynamicsConfig, channels: ChannelModel) -> np.ndarray:
    """Aggregate monotone counterpart of :func:`double_replicator_step`.

    With ``omega=1, alpha=0, sigma=1`` this is ``x + x*(2 - pibar)*(pi - pibar)``.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    return _clamp(x_prev + aggregate_monotone_rhs(x_prev, cfg, channels), "double aggregate")


def double_replicator_jacobian(cfg: DynamicsConfig, channels: ChannelModel) -> np.ndarray:
    """Analytic Jacobian of :func:`double_replicator_step`: ``(1 - sigma*pibar) I``."""
    c = channels.n_channels
    return (1.0 - cfg.sigma * average_payoff(channels, cfg.n_sus)) * np.eye(c)


def jacobian_inf_norm(jac: np.ndarray) -> float:
    return float(np.abs(jac).sum(axis=1).max())


def initial_migration(x0, x1) -> np.ndarray:
    """Migration matrix for independent random picks at iterations 0 and 1."""
    return np.outer(np.asarray(x1, dtype=float), np.asarray(x0, dtype=float))


def _check_migration(m, x_tm1):
    m = np.asarray(m, dtype=float)
    if abs(m.sum() - 1.0) > 1e-9 or m.min() < -1e-12:
        raise ValueError("migration matrix must be nonnegative and sum to 1")
    col = m.sum(axis=0)
    if x_tm1 is not None and not np.allclose(col, x_tm1, atol=1e-9):
        raise ValueError("x_tm1 must equal the column sums of the migration matrix")
    return m, col


def _within_channel_mean(m, pi_prev):
    """``sum_l m[j,l] pi_l / x_j`` per current channel (0 for empty rows)."""
    x_now = m.sum(axis=1)
    terms = np.where(m > 0, m * np.where(np.isfinite(pi_prev), pi_prev, 0.0), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(x_now > 0, terms.sum(axis=1) / np.where(x_now > 0, x_now, 1.0), 0.0)


def constrained_pi_map(m, x_tm1, cfg: DynamicsConfig, channels: ChannelModel
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean-field step of channel-constrained proportional imitation.

    Returns ``(m_next, x_next)`` where ``m_next[i, j]`` is the share on
    ``i`` at ``t+1`` that was on ``j`` at ``t``:
    ``m[j,i] * (1 + sigma * (pi_i(t-1) - pibar_j))`` with ``pibar_j`` the
    payoff average over the current occupants of ``j``.
    """
    m, x_tm1 = _check_migration(m, x_tm1)
    pi_prev = channel_payoffs(x_tm1, channels, cfg.n_sus)
    pibar_j = _within_channel_mean(m, pi_prev)
    pi_safe = np.where(np.isfinite(pi_prev), pi_prev, 0.0)
    # growth[j, i] for SUs now on j that were on i
    growth = 1.0 + cfg.sigma * (pi_safe[None, :] - pibar_j[:, None])
    m_next = (m * growth).T
    return m_next, m_next.sum(axis=1)


def constrained_di_map(m, x_tm1, cfg: DynamicsConfig, channels: ChannelModel
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean-field step of channel-constrained double imitation.

    ``m_next[i, j] = m[j,i] * (1 + sigma * g_j * (pi_i - pibar_j))`` where
    the gain ``g_j = [1 + (omega - pibar_j)/(omega - alpha)]/(omega - alpha)``
    equals ``2 - pibar_j`` for ``omega=1, alpha=0``.
    """
    m, x_tm1 = _check_migration(m, x_tm1)
    span = cfg.omega - cfg.alpha
    pi_prev = channel_payoffs(x_tm1, channels, cfg.n_sus)
    pibar_j = _within_channel_mean(m, pi_prev)
    gain = (1.0 + (cfg.omega - pibar_j) / span) / span
    pi_safe = np.where(np.isfinite(pi_prev), pi_prev, 0.0)
    growth = 1.0 + cfg.sigma * gain[:, None] * (pi_safe[None, :] - pibar_j[:, None])
    m_next = (m * growth).T
    return m_next, m_next.sum(axis=1)


def constrained_trajectory(map_fn, x0, x1, steps: int, cfg: DynamicsConfig,
                           channels: ChannelModel) -> np.ndarray:
    """Iterate an exact constrained map; row ``t`` is ``x(t)`` for ``t <= steps``."""
    m = initial_migration(x0, x1)
    out = np.empty((steps + 1, channels.n_channels))
    out[0], out[1] = x0, x1
    for t in range(2, steps + 1):
        m, x_next = map_fn(m, m.sum(axis=0), cfg, channels)
        out[t] = x_next
    return out


def interleaved_trajectory(step_fn, x0, x1, steps: int, cfg: DynamicsConfig,
                           channels: ChannelModel) -> np.ndarray:
    """Two independent copies of ``step_fn`` on the even and odd iterations."""
    out = np.empty((steps + 1, channels.n_channels))
    out[0], out[1] = x0, x1
    for t in range(2, steps + 1):
        out[t] = step_fn(out[t - 2], cfg, channels)
    return out


def iterate_to_fixed_point(step_fn, x0, cfg: DynamicsConfig, channels: ChannelModel,
                           max_steps: int = 10_000) -> tuple[np.ndarray, int | None]:
    """Iterate ``step_fn`` until within ``convergence_tol`` of equilibrium."""
    x_star = nash_equilibrium(channels)
    x = np.asarray(x0, dtype=float)
    for k in range(max_steps + 1):
        if np.max(np.abs(x - x_star)) < cfg.convergence_tol:
            return x, k
        x = step_fn(x, cfg, channels)
    return x, None


def first_within(traj: np.ndarray, channels: ChannelModel, tol: float) -> int | None:
    """First index from which the trajectory stays within ``tol`` of equilibrium."""
    dev = np.max(np.abs(traj - nash_equilibrium(channels)), axis=1)
    outside = np.flatnonzero(dev >= tol)
    if outside.size == 0:
        return 0
    k = int(outside[-1]) + 1
    return k if k < len(traj) else None


@dataclass
class PhasePortrait:
    x1: np.ndarray
    replicator_velocity: np.ndarray
    aggregate_velocity: np.ndarray
    equilibrium_x1: float
    trajectories: dict


def phase_portrait(channels: ChannelModel, cfg: DynamicsConfig, resolution: int = 41,
                   starts=(0.05, 0.25, 0.5, 0.75, 0.95), t_max: float = 150.0) -> PhasePortrait:
    """Velocity of ``x_1`` along the 2-channel simplex, plus sample trajectories."""
    if channels.n_channels != 2:
        raise ValueError("phase portraits are only supported for 2 channels")
    grid = np.linspace(0.0, 1.0, resolution)
    pts = np.column_stack([grid, 1.0 - grid])
    rep = np.array([replicator_rhs(p, cfg, channels)[0] for p in pts])
    agg = np.array([aggregate_monotone_rhs(p, cfg, channels)[0] for p in pts])
    times = np.arange(0.0, t_max + 1e-9, 1.0)
    trajs = {}
    for s in starts:
        x0 = np.array([s, 1.0 - s])
        trajs[s] = {
            "t": times,
            "replicator": replicator_closed_form(x0, times, cfg, channels)[:, 0],
            "aggregate": aggregate_closed_form(x0, times, cfg, channels)[:, 0],
        }
    return PhasePortrait(grid, rep, agg, float(nash_equilibrium(channels)[0]), trajs)


def write_trajectory_csv(path, times, states) -> None:
    """CSV with columns ``t, x_0, ..., x_{C-1}``."""
    states = np.asarray(states)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x_{i}" for i in range(states.shape[1])])
        for t, row in zip(times, states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
