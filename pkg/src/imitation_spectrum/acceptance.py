"""Reproduction experiments with pinned seeds and pass/fail verdicts.

Each ``check_*`` function runs one experiment and returns a
:class:`Criterion`. :func:`run_all` drives the whole set; it backs both the
``reproduce`` CLI subcommand and the acceptance test module.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from .model import ChannelModel, NetworkState, jain_index, nash_equilibrium, su_payoffs
from .policies import (Policy, PolicyParams, Scope, disap_probabilities, is_imitation_stable,
                       pisap_probability, policy_step)
from .sim import SimConfig, convergence_bound_check, run_batch

REFERENCE_MU = (0.3, 0.5, 0.8)
SEED = 4242


@dataclass
class Criterion:
    key: str
    title: str
    passed: bool
    measured: dict
    expected: str
    seconds: float = 0.0
    max_seconds: float | None = None

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.key} {self.title}: {self.measured} (expected {self.expected})"

    def as_dict(self) -> dict:
        return {"key": self.key, "title": self.title, "passed": self.passed,
                "measured": self.measured, "expected": self.expected}


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        crit = fn(*args, **kwargs)
        crit.seconds = time.perf_counter() - t0
        if crit.max_seconds is not None and crit.seconds > crit.max_seconds:
            crit.passed = False
            crit.measured = {**crit.measured, "runtime_exceeded_s": round(crit.seconds, 2)}
        return crit
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _channels():
    return ChannelModel(REFERENCE_MU)


@_timed
def check_ne_closed_form() -> Criterion:
    ch = _channels()
    x = nash_equilibrium(ch)
    err = float(np.max(np.abs(x - np.array([0.1875, 0.3125, 0.5]))))
    reps = 1000
    t0 = time.perf_counter()
    for _ in range(reps):
        nash_equilibrium(ch)
    per_call = (time.perf_counter() - t0) / reps
    ok = err <= 1e-12 and per_call < 1e-3
    return Criterion("AC1", "equilibrium closed form", ok,
                     {"x_star": x.round(12).tolist(), "max_error": err},
                     "[0.1875, 0.3125, 0.5] within 1e-12, <1 ms per call", max_seconds=1.0)


@_timed
def check_finite_population_equilibrium(runs: int = 100) -> Criterion:
    cfg = SimConfig(params=PolicyParams(sigma=1.0, epsilon_u=0.01), policy=Policy.PISAP,
                    runs=runs, seed=SEED, max_iterations=5000)
    batch = run_batch(cfg)
    mode = batch.final_counts_mode()
    within = max(abs(a - b) for a, b in zip(mode, (9, 16, 25))) <= 2
    ok = within and batch.n_converged > 0 and batch.all_converged_epsilon_ne()
    return Criterion("AC2", "finite-population equilibrium (global PISAP)", ok,
                     {"final_counts_mode": list(mode), "converged": batch.n_converged,
                      "runs": runs, "all_converged_eps_ne_0.02": batch.all_converged_epsilon_ne()},
                     "mode within +-2 of (9, 16, 25); every converged run is a 0.02-NE",
                     max_seconds=30.0)


def fairness_config(policy, runs: int = 1000, horizon: int = 250) -> SimConfig:
    """Channel-constrained fairness setting (sigma = 1, eps_U = 0.01)."""
    return SimConfig(params=PolicyParams(sigma=1.0, epsilon_u=0.01, scope=Scope.SAME_CHANNEL),
                     policy=policy, runs=runs, seed=SEED, max_iterations=horizon + 1,
                     stop_at_convergence=False)


def first_crossing(series: np.ndarray, level: float) -> int | None:
    hit = np.flatnonzero(series >= level)
    return int(hit[0]) if hit.size else None


@_timed
def check_fairness(runs: int = 1000, level: float = 0.982) -> Criterion:
    crossing, jain = {}, {}
    for policy in (Policy.PISAP, Policy.DISAP):
        fair = run_batch(fairness_config(policy, runs)).mean_fairness()
        crossing[policy.value] = first_crossing(fair, level)
        jain[policy.value] = {t: round(float(fair[t]), 5) for t in (100, 150, 200, 250)}
    p, d = crossing["pisap"], crossing["disap"]
    ok = p is not None and d is not None and p <= 250 and d <= 150 and d < p
    return Criterion("AC3", "Jain fairness under channel constraint", ok,
                     {"crossing_0.982": crossing, "jain_at": jain, "runs": runs},
                     "PISAP <= 250, DISAP <= 150, DISAP strictly earlier", max_seconds=300.0)


@_timed
def check_closed_forms() -> Criterion:
    ch = _channels()
    cfg = dyn.DynamicsConfig(n_sus=50, sigma=1.0, dt=0.01, t_max=100.0)
    x0 = np.array([[1 / 3, 1 / 3, 1 / 3], [0.9, 0.05, 0.05], [0.02, 0.08, 0.9]])
    # both flows integrated side by side: layer 0 replicator, layer 1 aggregate
    gain = np.array([1.0, dyn.aggregate_gain(cfg, ch)])[:, None, None]
    times, traj = dyn.integrate(lambda x: gain * dyn.replicator_rhs(x, cfg, ch),
                                np.stack([x0, x0]), cfg)
    errors = {}
    for layer, (name, closed) in enumerate((("replicator", dyn.replicator_closed_form),
                                            ("aggregate", dyn.aggregate_closed_form))):
        errors[name] = max(float(np.max(np.abs(traj[:, layer, k] - closed(x0[k], times, cfg, ch))))
                           for k in range(len(x0)))
    ok = max(errors.values()) < 1e-8
    return Criterion("AC4", "closed forms vs RK4", ok, {"max_error": errors},
                     "< 1e-8 over t in [0, 100], dt = 0.01", max_seconds=1.0)


@_timed
def check_contraction(starts: int = 100) -> Criterion:
    ch = _channels()
    cfg = dyn.DynamicsConfig(n_sus=50, sigma=1.0)
    jac = dyn.double_replicator_jacobian(cfg, ch)
    norm = dyn.jacobian_inf_norm(jac)
    expected_norm = 1.0 - ch.total / 50
    # central differences, independent of the analytic Jacobian
    x = np.array([0.5, 0.3, 0.2])
    h = 1e-6
    fd = np.column_stack([
        (dyn.double_replicator_step(x + h * e, cfg, ch) - dyn.double_replicator_step(x - h * e, cfg, ch))
        / (2 * h) for e in np.eye(3)])
    rng = np.random.default_rng(SEED)
    xs = rng.dirichlet(np.ones(3), size=starts)
    x_star = nash_equilibrium(ch)
    steps = 0
    while np.max(np.abs(xs - x_star)) >= 1e-9 and steps < 10_000:
        xs = dyn.double_replicator_step(xs, cfg, ch)
        steps += 1
    dev = float(np.max(np.abs(xs - x_star)))
    ok = abs(norm - 0.968) < 1e-12 and abs(norm - expected_norm) < 1e-12 \
        and np.allclose(fd, jac, atol=1e-8) and dev < 1e-9
    return Criterion("AC5", "double-replicator contraction", ok,
                     {"jacobian_inf_norm": norm, "fd_jacobian_max_diff": float(np.max(np.abs(fd - jac))),
                      "starts": starts, "steps": steps, "final_max_dev": dev},
                     "||J||_inf = 0.968; all starts within 1e-9 of x*", max_seconds=1.0)


@_timed
def check_approximation(steps: int = 1000) -> Criterion:
    ch = _channels()
    cfg = dyn.DynamicsConfig(n_sus=50, sigma=1.0)
    u = np.full(3, 1 / 3)
    pi_exact = dyn.constrained_trajectory(dyn.constrained_pi_map, u, u, steps, cfg, ch)
    pi_apx = dyn.interleaved_trajectory(dyn.double_replicator_step, u, u, steps, cfg, ch)
    di_exact = dyn.constrained_trajectory(dyn.constrained_di_map, u, u, steps, cfg, ch)
    di_apx = dyn.interleaved_trajectory(dyn.double_aggregate_step, u, u, steps, cfg, ch)
    sup = {"pi": float(np.max(np.abs(pi_exact - pi_apx))),
           "di": float(np.max(np.abs(di_exact - di_apx)))}
    ok = max(sup.values()) < 0.05
    return Criterion("AC6", "constrained maps vs interleaved approximations", ok,
                     {"sup_norm": sup, "steps": steps}, "sup-norm < 0.05", max_seconds=1.0)


CONCENTRATION_X0 = np.array([0.5, 0.3, 0.2])
CONCENTRATION_X1 = np.array([0.4, 0.4, 0.2])


def shared_start_state(n_sus: int, channels: ChannelModel, x0=CONCENTRATION_X0,
                       x1=CONCENTRATION_X1) -> NetworkState:
    """State at iteration 1 whose migration counts are exactly ``N * x1_j * x0_l``."""
    m = dyn.initial_migration(x0, x1) * n_sus
    cells = np.rint(m).astype(int)
    if not np.allclose(cells, m) or cells.sum() != n_sus:
        raise ValueError("initial proportions must give integer counts")
    now, prev = [], []
    for j in range(cells.shape[0]):
        for l in range(cells.shape[1]):
            now += [j] * cells[j, l]
            prev += [l] * cells[j, l]
    prev = np.array(prev)
    return NetworkState(np.array(now), prev, su_payoffs(prev, channels), 1, channels.n_channels)


@_timed
def check_concentration(seeds: int = 500, delta: float = 0.05, sizes=(50, 200, 800),
                        sigma: float = 5.0) -> Criterion:
    ch = _channels()
    c = ch.n_channels
    measured, ok = {}, True
    maps = {Policy.PISAP: dyn.constrained_pi_map, Policy.DISAP: dyn.constrained_di_map}
    for policy, map_fn in maps.items():
        params = PolicyParams(sigma=sigma, epsilon_u=0.0, scope=Scope.SAME_CHANNEL)
        probs, bounds = [], []
        for n in sizes:
            m = dyn.initial_migration(CONCENTRATION_X0, CONCENTRATION_X1)
            _, x2 = map_fn(m, None, dyn.DynamicsConfig(n_sus=n, sigma=sigma), ch)
            state = shared_start_state(n, ch)
            exceed = np.zeros(c)
            for s in range(seeds):
                rng = np.random.default_rng([SEED, n, s])
                p2 = np.bincount(policy_step(state, ch, params, policy, rng).channel_now,
                                 minlength=c) / n
                exceed += np.abs(p2 - x2) > delta
            probs.append(float((exceed / seeds).max()))
            bounds.append(c / (n * delta) ** 2)
        mono = all(a >= b for a, b in zip(probs, probs[1:]))
        below = all(p < b for p, b in zip(probs, bounds))
        ok &= mono and below
        measured[policy.value] = {"P_exceed": dict(zip(map(str, sizes), probs)),
                                  "bound": dict(zip(map(str, sizes), [round(b, 5) for b in bounds]))}
    return Criterion("AC7", "finite-population concentration at t=2", ok, measured,
                     "nonincreasing in N and below C/(N delta)^2", max_seconds=60.0)


@_timed
def check_convergence_bound(runs: int = 1000) -> Criterion:
    cfg = SimConfig(params=PolicyParams(sigma=1.0, epsilon_u=0.01), policy=Policy.PISAP,
                    runs=runs, seed=SEED + 1, max_iterations=5000)
    rep = convergence_bound_check(cfg)
    ok = not rep["violation"] and rep["epsilon_ne"]
    return Criterion("AC8", "empirical convergence vs worst-case bound", ok, rep,
                     "every run converges; max iteration < N^2/(mu_min sigma eps_U)",
                     max_seconds=300.0)


def _random_state(rng, n, c, with_history=True):
    now = rng.integers(0, c, size=n)
    prev = rng.integers(0, c, size=n)
    mu = rng.uniform(0.05, 1.0, size=c)
    ch = ChannelModel(mu)
    return ch, NetworkState(now, prev, su_payoffs(prev, ch), 1, c)


@_timed
def check_properties(cases: int = 10_000) -> Criterion:
    rng = np.random.default_rng(SEED)
    results = {}

    # simplex conservation of every flow and map
    ch = _channels()
    cfg = dyn.DynamicsConfig(n_sus=50)
    xs = rng.dirichlet(np.ones(3), size=cases)
    drift = max(
        float(np.max(np.abs(dyn.double_replicator_step(xs, cfg, ch).sum(axis=1) - 1))),
        float(np.max(np.abs(dyn.double_aggregate_step(xs, cfg, ch).sum(axis=1) - 1))),
        float(np.max(np.abs(dyn.replicator_rhs(xs, cfg, ch).sum(axis=1)))),
        float(np.max(np.abs(dyn.aggregate_monotone_rhs(xs, cfg, ch).sum(axis=1)))),
    )
    ms = rng.dirichlet(np.ones(9), size=cases).reshape(cases, 3, 3)
    for m in ms:
        for fn in (dyn.constrained_pi_map, dyn.constrained_di_map):
            m2, x2 = fn(m, None, cfg, ch)
            drift = max(drift, abs(float(m2.sum()) - 1), abs(float(x2.sum()) - 1))
    results["simplex"] = drift < 1e-9

    # probability range and gating on random payoff tuples
    u = rng.uniform(0, 1, size=(cases, 3))
    chs = rng.integers(0, 3, size=(cases, 3))
    sig = rng.uniform(0.01, 2.0, size=cases)
    eps = rng.uniform(0, 0.3, size=cases)
    p = pisap_probability(u[:, 0], u[:, 1], sig, eps)
    lo, hi = np.minimum(u[:, 1], u[:, 2]), np.maximum(u[:, 1], u[:, 2])
    swap = u[:, 1] > u[:, 2]
    c_lo, c_hi = np.where(swap, chs[:, 2], chs[:, 1]), np.where(swap, chs[:, 1], chs[:, 2])
    p1, p2 = disap_probabilities(u[:, 0], chs[:, 0], lo, c_lo, hi, c_hi, sig, eps)
    results["probability_range"] = bool(
        np.all((p >= 0) & (p <= 1)) and np.all((p1 >= 0) & (p2 >= 0) & (p1 + p2 <= 1 + 1e-12)))
    results["gating"] = bool(
        np.all(p[u[:, 0] >= u[:, 1] - eps] == 0)
        and np.all(p1[u[:, 0] >= lo - eps] == 0) and np.all(p2[u[:, 0] >= hi - eps] == 0))

    # imitation-only, determinism and fixed points on random finite states
    imit_ok = det_ok = fix_ok = True
    per_combo = cases // 4
    for policy in Policy:
        for scope in Scope:
            for k in range(per_combo):
                n = int(rng.integers(3, 12))
                chm, st = _random_state(rng, n, 3)
                params = PolicyParams(sigma=float(rng.uniform(0.1, 1)), epsilon_u=0.0, scope=scope)
                seed = int(rng.integers(2**31))
                a = policy_step(st, chm, params, policy, np.random.default_rng(seed))
                b = policy_step(st, chm, params, policy, np.random.default_rng(seed))
                det_ok &= np.array_equal(a.channel_now, b.channel_now)
                allowed = set(st.channel_now) if scope is Scope.GLOBAL else set(st.channel_prev)
                imit_ok &= set(a.channel_now.tolist()) <= allowed
                # huge threshold makes any state imitation-stable
                frozen = PolicyParams(sigma=params.sigma, epsilon_u=2.0, scope=scope)
                if not is_imitation_stable(st, chm, frozen, policy):
                    fix_ok = False
                    continue
                f = policy_step(st, chm, frozen, policy, np.random.default_rng(seed))
                keep = st.channel_now if scope is Scope.GLOBAL else st.channel_prev
                fix_ok &= np.array_equal(f.channel_now, keep)
    results["imitation_only"] = bool(imit_ok)
    results["determinism"] = bool(det_ok)
    results["fixed_point"] = bool(fix_ok)
    return Criterion("AC9", "randomized property suites", all(results.values()),
                     {**results, "cases_each": cases}, "all properties hold", max_seconds=60.0)


CHECKS = (check_ne_closed_form, check_finite_population_equilibrium, check_fairness,
          check_closed_forms, check_contraction, check_approximation, check_concentration,
          check_convergence_bound, check_properties)


def run_all(report=print) -> list[Criterion]:
    out = []
    for check in CHECKS:
        crit = check()
        report(f"{crit.line()} [{crit.seconds:.1f}s]")
        out.append(crit)
    return out
