"""Finite-population Monte Carlo engine."""

from __future__ import annotations

import csv
import enum
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import ChannelModel, NetworkState, epsilon_ne_check, jain_index
from .policies import Policy, PolicyParams, Scope, is_imitation_stable, policy_step

DEFAULT_MU = (0.3, 0.5, 0.8)


class PayoffMode(str, enum.Enum):
    EXPECTED = "expected"
    STOCHASTIC = "stochastic"


@dataclass(frozen=True)
class SimConfig:
    n_sus: int = 50
    channels: ChannelModel = field(default_factory=lambda: ChannelModel(DEFAULT_MU))
    params: PolicyParams = field(default_factory=lambda: PolicyParams(sigma=1.0, epsilon_u=0.01))
    policy: Policy = Policy.PISAP
    payoff_mode: PayoffMode = PayoffMode.EXPECTED
    slots_per_iteration: int = 100
    max_iterations: int = 2000
    seed: int = 0
    runs: int = 1
    stop_at_convergence: bool = True
    hysteresis: int = 5

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        object.__setattr__(self, "payoff_mode", PayoffMode(self.payoff_mode))
        if self.n_sus < 2:
            raise ValueError("n_sus must be at least 2")
        if self.policy is Policy.DISAP and self.params.scope is Scope.GLOBAL and self.n_sus < 3:
            raise ValueError("global double imitation needs at least 3 SUs")
        if self.max_iterations < 2:
            raise ValueError("max_iterations must be at least 2")
        if self.payoff_mode is PayoffMode.STOCHASTIC and self.slots_per_iteration < 1:
            raise ValueError("slots_per_iteration must be at least 1")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.hysteresis < 1:
            raise ValueError("hysteresis must be at least 1")


@dataclass
class RunTrace:
    """Per-iteration record of a single run.

    Row ``t`` of every array describes iteration ``t``: ``assignments`` the
    channel of each SU, ``payoffs`` what each SU earned, ``counts`` the
    channel occupancy and ``mean_payoff`` the per-channel mean payoff (NaN on
    empty channels). ``converged_at`` is the first iteration of the stable
    streak that ended the run, or None.
    """

    assignments: np.ndarray
    payoffs: np.ndarray
    counts: np.ndarray
    mean_payoff: np.ndarray
    converged_at: int | None
    final_state: NetworkState
    fairness: np.ndarray

    @property
    def n_iterations(self) -> int:
        return self.counts.shape[0]


def run_seed(master: int, k: int) -> np.random.SeedSequence:
    """Seed of the ``k``-th run of a batch."""
    return np.random.SeedSequence(master, spawn_key=(k,))


def _realized_payoffs(channel_now, cfg: SimConfig, rng_pu: np.random.Generator) -> np.ndarray:
    mu = cfg.channels.mu
    counts = np.bincount(channel_now, minlength=mu.size)
    if cfg.payoff_mode is PayoffMode.EXPECTED:
        per_channel = mu
    else:
        # one PU draw per channel per slot, shared by every SU on it
        per_channel = rng_pu.binomial(cfg.slots_per_iteration, mu) / cfg.slots_per_iteration
    return per_channel[channel_now] / counts[channel_now]


def fairness_series(trace_or_payoffs) -> np.ndarray:
    """Jain index of cumulative per-SU throughput after each iteration."""
    pay = trace_or_payoffs.payoffs if isinstance(trace_or_payoffs, RunTrace) else trace_or_payoffs
    cum = np.cumsum(np.asarray(pay, dtype=float), axis=0)
    out = np.ones(cum.shape[0])
    for t, row in enumerate(cum):
        if row.any():
            out[t] = jain_index(row)
    return out


def run_once(cfg: SimConfig, seed=None) -> RunTrace:
    """Simulate one realization.

    Channels are drawn uniformly at random for iteration 0 (and iteration 1
    under channel-constrained imitation); every later iteration plays the
    current assignment, records payoffs, then revises synchronously. The run
    ends after ``max_iterations`` iterations or, if ``stop_at_convergence``,
    once the state has been imitation-stable ``hysteresis`` times in a row.
    """
    seed = cfg.seed if seed is None else seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_ss, policy_ss, pu_ss = ss.spawn(3)
    rng_init = np.random.default_rng(init_ss)
    rng_pol = np.random.default_rng(policy_ss)
    rng_pu = np.random.default_rng(pu_ss)

    c = cfg.channels.n_channels
    n = cfg.n_sus
    assign_log, pay_log = [], []

    def play(channel_now):
        u = _realized_payoffs(channel_now, cfg, rng_pu)
        assign_log.append(channel_now)
        pay_log.append(u)
        return u

    first = rng_init.integers(0, c, size=n)
    if cfg.params.scope is Scope.GLOBAL:
        state = NetworkState.from_channels(first, c, iteration=0)
    else:
        u0 = play(first)
        state = NetworkState(rng_init.integers(0, c, size=n), first, u0, 1, c)

    streak_start, converged_at = None, None
    while True:
        u = play(state.channel_now)
        if is_imitation_stable(state, cfg.channels, cfg.params, cfg.policy, payoffs=u):
            if streak_start is None:
                streak_start = state.iteration
            if state.iteration - streak_start + 1 >= cfg.hysteresis:
                converged_at = streak_start
                if cfg.stop_at_convergence:
                    break
        else:
            streak_start, converged_at = None, None
        if state.iteration + 1 >= cfg.max_iterations:
            break
        state = policy_step(state, cfg.channels, cfg.params, cfg.policy, rng_pol, payoffs=u)

    assignments = np.array(assign_log)
    payoffs = np.array(pay_log)
    counts = np.array([np.bincount(a, minlength=c) for a in assignments])
    totals = np.array([np.bincount(a, weights=u, minlength=c) for a, u in zip(assignments, payoffs)])
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_payoff = np.where(counts > 0, totals / np.maximum(counts, 1), np.nan)
    return RunTrace(assignments, payoffs, counts, mean_payoff, converged_at, state,
                    fairness_series(payoffs))


@dataclass
class RunSummary:
    """Compact, picklable outcome of one run of a batch."""

    index: int
    converged_at: int | None
    final_counts: tuple
    epsilon_ne: bool
    fairness: np.ndarray


def _summarize(cfg: SimConfig, k: int) -> RunSummary:
    tr = run_once(cfg, run_seed(cfg.seed, k))
    final = tuple(int(v) for v in tr.counts[-1])
    ok = epsilon_ne_check(tr.counts[-1], cfg.channels, 2 * cfg.params.epsilon_u)
    return RunSummary(k, tr.converged_at, final, bool(ok), tr.fairness)


def _summarize_chunk(args):
    cfg, ks = args
    return [_summarize(cfg, k) for k in ks]


@dataclass
class BatchResult:
    config: SimConfig
    runs: list

    @property
    def converged(self) -> list:
        return [r for r in self.runs if r.converged_at is not None]

    def converged_at(self) -> np.ndarray:
        return np.array([r.converged_at for r in self.converged], dtype=float)

    @property
    def n_converged(self) -> int:
        return len(self.converged)

    def convergence_mean(self) -> float | None:
        its = self.converged_at()
        return float(its.mean()) if its.size else None

    def convergence_std(self) -> float | None:
        its = self.converged_at()
        return float(its.std()) if its.size else None

    def convergence_max(self) -> int | None:
        its = self.converged_at()
        return int(its.max()) if its.size else None

    def final_count_histogram(self) -> Counter:
        return Counter(r.final_counts for r in self.runs)

    def final_counts_mode(self) -> tuple:
        hist = self.final_count_histogram()
        top = max(hist.values())
        # ties broken lexicographically so the answer is order-independent
        return min(k for k, v in hist.items() if v == top)

    def mean_fairness(self) -> np.ndarray:
        """Pointwise mean over runs, truncated to the shortest run."""
        length = min(r.fairness.size for r in self.runs)
        return np.mean([r.fairness[:length] for r in self.runs], axis=0)

    def all_converged_epsilon_ne(self) -> bool:
        return all(r.epsilon_ne for r in self.converged)


def run_batch(cfg: SimConfig, workers: int = 1) -> BatchResult:
    """Run ``cfg.runs`` independent realizations.

    Run ``k`` is seeded by :func:`run_seed`, so results do not depend on
    ``workers`` or on execution order.
    """
    ks = list(range(cfg.runs))
    if workers <= 1 or cfg.runs == 1:
        runs = [_summarize(cfg, k) for k in ks]
    else:
        chunks = [(cfg, ks[i::workers]) for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = [r for part in pool.map(_summarize_chunk, chunks) for r in part]
        runs.sort(key=lambda r: r.index)
    return BatchResult(cfg, runs)


def convergence_bound(cfg: SimConfig) -> float:
    """Worst-case iteration count ``N^2 / (mu_min * sigma * eps_U)``."""
    eps = cfg.params.epsilon_u
    if eps <= 0:
        raise ValueError("the convergence bound needs epsilon_u > 0")
    sigma = cfg.params.sigma_for(cfg.policy)
    return cfg.n_sus ** 2 / (float(cfg.channels.mu.min()) * sigma * eps)


def convergence_bound_check(cfg: SimConfig, batch: BatchResult | None = None,
                            workers: int = 1) -> dict:
    bound = convergence_bound(cfg)
    batch = run_batch(cfg, workers) if batch is None else batch
    emp_max = batch.convergence_max()
    return {
        "bound": bound,
        "runs": cfg.runs,
        "converged_runs": batch.n_converged,
        "converged_at_mean": batch.convergence_mean(),
        "converged_at_max": emp_max,
        "violation": emp_max is None or emp_max > bound or batch.n_converged < cfg.runs,
        "epsilon_ne": batch.all_converged_epsilon_ne(),
        "note": "the bound is a worst case; observed convergence is far faster",
    }


def batch_summary(batch: BatchResult, jain_points=(100, 200)) -> dict:
    """Summary in the documented JSON shape."""
    cfg = batch.config
    fair = batch.mean_fairness()
    try:
        bound = convergence_bound(cfg)
    except ValueError:
        bound = None
    return {
        "converged_at_mean": batch.convergence_mean(),
        "converged_at_max": batch.convergence_max(),
        "bound": bound,
        "final_counts_mode": list(batch.final_counts_mode()),
        "jain_at": {str(t): (float(fair[t]) if t < fair.size else None) for t in jain_points},
        "epsilon_ne": batch.all_converged_epsilon_ne(),
    }


def write_trace_csv(path, trace: RunTrace) -> None:
    """Columns ``iteration,channel,count,mean_payoff``; empty payoff if unoccupied."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "channel", "count", "mean_payoff"])
        for t, (cnt, mp) in enumerate(zip(trace.counts, trace.mean_payoff)):
            for i, (n_i, p_i) in enumerate(zip(cnt, mp)):
                w.writerow([t, i, int(n_i), "" if math.isnan(p_i) else repr(float(p_i))])


def write_fairness_csv(path, series) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "jain"])
        for t, v in enumerate(series):
            w.writerow([t, repr(float(v))])


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

