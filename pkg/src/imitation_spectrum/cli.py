"""Command-line front end.

Subcommands ``simulate``, ``dynamics``, ``ne``, ``phase`` and ``reproduce``
share one flat configuration: an optional ``key = value`` file (``#``
comments, ``mu`` as a comma list) overridden by command-line flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import acceptance
from . import dynamics as dyn
from .model import ChannelModel, nash_equilibrium
from .policies import Policy, PolicyParams, Scope
from .sim import (DEFAULT_MU, PayoffMode, SimConfig, batch_summary, run_batch, run_once,
                  run_seed, write_fairness_csv, write_summary_json, write_trace_csv)

SUBCOMMANDS = ("simulate", "dynamics", "ne", "phase", "reproduce")


class ConfigError(ValueError):
    """Bad configuration; the message names the offending key."""


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
KEYS = {
    "mu": (_floats, DEFAULT_MU),
    "n": (int, 50),
    "sigma": (float, 1.0),
    "epsilon_u": (float, 0.01),
    "omega": (float, 1.0),
    "alpha": (float, 0.0),
    "policy": (Policy, Policy.PISAP),
    "scope": (Scope, Scope.GLOBAL),
    "payoff": (PayoffMode, PayoffMode.EXPECTED),
    "slots": (int, 100),
    "iters": (int, 2000),
    "runs": (int, 100),
    "seed": (int, 0),
    "exploration": (float, 0.0),
    "hysteresis": (int, 5),
    "full_horizon": (_bool, False),
    "workers": (int, 1),
    "dt": (float, 0.01),
    "t_max": (float, 100.0),
    "steps": (int, 1000),
    "out": (str, "out"),
}


def read_config_file(path) -> dict:
    """Raw ``key -> string`` pairs of a flat config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: no such file: {path}")
    raw = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key.replace("-", "_")] = value
    return raw


@dataclass
class CliConfig:
    subcommand: str
    values: dict

    @property
    def output_dir(self) -> Path:
        return Path(self.values["out"])

    def channels(self) -> ChannelModel:
        return ChannelModel(self.values["mu"])

    def sim_config(self) -> SimConfig:
        v = self.values
        params = PolicyParams(sigma=v["sigma"], epsilon_u=v["epsilon_u"], omega=v["omega"],
                              alpha=v["alpha"], scope=v["scope"], exploration=v["exploration"])
        return SimConfig(n_sus=v["n"], channels=self.channels(), params=params, policy=v["policy"],
                         payoff_mode=v["payoff"], slots_per_iteration=v["slots"],
                         max_iterations=v["iters"], seed=v["seed"], runs=v["runs"],
                         stop_at_convergence=not v["full_horizon"], hysteresis=v["hysteresis"])

    def dynamics_config(self) -> dyn.DynamicsConfig:
        v = self.values
        return dyn.DynamicsConfig(n_sus=v["n"], sigma=v["sigma"], omega=v["omega"],
                                  alpha=v["alpha"], dt=v["dt"], t_max=v["t_max"])


def parse_config(subcommand: str, config_path=None, overrides: dict | None = None) -> CliConfig:
    """Merge defaults, file values and flag overrides, then validate.

    Flags win over the file. Unknown keys, malformed values and violated
    invariants raise :class:`ConfigError` naming the key.
    """
    raw = read_config_file(config_path) if config_path else {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values = {k: default for k, (_, default) in KEYS.items()}
    for key, value in raw.items():
        parser = KEYS[key][0]
        try:
            values[key] = parser(value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigError(f"{key}: malformed value {value!r} ({exc})") from None
    cfg = CliConfig(subcommand, values)
    checks = {
        "mu": cfg.channels,
        "sigma": lambda: values["sigma"] > 0 or _fail("must be positive"),
        "epsilon_u": lambda: values["epsilon_u"] >= 0 or _fail("must be nonnegative"),
        "n": lambda: values["n"] >= 2 or _fail("must be at least 2"),
        "runs": lambda: values["runs"] >= 1 or _fail("must be at least 1"),
        "iters": lambda: values["iters"] >= 2 or _fail("must be at least 2"),
        "slots": lambda: values["slots"] >= 1 or _fail("must be at least 1"),
        "steps": lambda: values["steps"] >= 2 or _fail("must be at least 2"),
        "dt": lambda: values["dt"] > 0 or _fail("must be positive"),
        "t_max": lambda: values["t_max"] > 0 or _fail("must be positive"),
        "workers": lambda: values["workers"] >= 1 or _fail("must be at least 1"),
        "exploration": lambda: 0 <= values["exploration"] <= 1 or _fail("must lie in [0, 1]"),
        "alpha": lambda: values["alpha"] < values["omega"] or _fail("must be below omega"),
    }
    for key, check in checks.items():
        try:
            check()
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    if subcommand == "simulate":
        try:
            cfg.sim_config()
        except ValueError as exc:
            raise ConfigError(f"n: {exc}") from None
    return cfg


def _fail(msg):
    raise ValueError(msg)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_simulate(cfg: CliConfig) -> int:
    sim = cfg.sim_config()
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    batch = run_batch(sim, workers=cfg.values["workers"])
    # the trace CSV follows the first run of the batch
    write_trace_csv(out / "trace.csv", run_once(sim, run_seed(sim.seed, 0)))
    write_fairness_csv(out / "fairness.csv", batch.mean_fairness())
    summary = batch_summary(batch)
    write_summary_json(out / "summary.json", summary)
    print(f"{sim.policy.value}/{sim.params.scope.value}: {batch.n_converged}/{sim.runs} converged, "
          f"mode {summary['final_counts_mode']}, mean convergence {summary['converged_at_mean']}")
    return 0


def cmd_dynamics(cfg: CliConfig) -> int:
    ch = cfg.channels()
    dc = cfg.dynamics_config()
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    c = ch.n_channels
    x0 = np.full(c, 1.0 / c)
    steps = cfg.values["steps"]

    times, rep = dyn.integrate(lambda x: dyn.replicator_rhs(x, dc, ch), x0, dc)
    _, agg = dyn.integrate(lambda x: dyn.aggregate_monotone_rhs(x, dc, ch), x0, dc)
    rep_cf = dyn.replicator_closed_form(x0, times, dc, ch)
    agg_cf = dyn.aggregate_closed_form(x0, times, dc, ch)
    for name, states in (("replicator", rep), ("aggregate", agg),
                         ("replicator_closed_form", rep_cf), ("aggregate_closed_form", agg_cf)):
        dyn.write_trajectory_csv(out / f"{name}.csv", times, states)

    iters = np.arange(steps + 1, dtype=float)
    discrete = {
        "constrained_pi": dyn.constrained_trajectory(dyn.constrained_pi_map, x0, x0, steps, dc, ch),
        "constrained_di": dyn.constrained_trajectory(dyn.constrained_di_map, x0, x0, steps, dc, ch),
        "double_replicator": dyn.interleaved_trajectory(dyn.double_replicator_step, x0, x0, steps, dc, ch),
        "double_aggregate": dyn.interleaved_trajectory(dyn.double_aggregate_step, x0, x0, steps, dc, ch),
    }
    for name, states in discrete.items():
        dyn.write_trajectory_csv(out / f"{name}.csv", iters, states)

    report = {
        "sup_norm": {
            "pi": float(np.max(np.abs(discrete["constrained_pi"] - discrete["double_replicator"]))),
            "di": float(np.max(np.abs(discrete["constrained_di"] - discrete["double_aggregate"]))),
        },
        "closed_form_max_error": {
            "replicator": float(np.max(np.abs(rep - rep_cf))),
            "aggregate": float(np.max(np.abs(agg - agg_cf))),
        },
        "iterations_to_1e-3": {
            "constrained_pi": dyn.first_within(discrete["constrained_pi"], ch, 1e-3),
            "constrained_di": dyn.first_within(discrete["constrained_di"], ch, 1e-3),
        },
        "equilibrium": nash_equilibrium(ch).tolist(),
    }
    (out / "deviation.json").write_text(_dump(report))
    print(f"sup-norm PI {report['sup_norm']['pi']:.3g}, DI {report['sup_norm']['di']:.3g}; "
          f"to 1e-3: PI {report['iterations_to_1e-3']['constrained_pi']}, "
          f"DI {report['iterations_to_1e-3']['constrained_di']}")
    return 0


def cmd_ne(cfg: CliConfig) -> int:
    ch = cfg.channels()
    n = cfg.values["n"]
    x = nash_equilibrium(ch)
    counts = x * n
    print(_dump({
        "x_star": x.tolist(),
        "payoff": (ch.mu / counts).tolist(),
        "n_x_star": counts.tolist(),
        "n_x_star_rounded": np.rint(counts).astype(int).tolist(),
    }), end="")
    return 0


def cmd_phase(cfg: CliConfig) -> int:
    ch = cfg.channels()
    if ch.n_channels != 2:
        raise ConfigError(f"mu: phase portraits need exactly 2 channels, got {ch.n_channels}")
    portrait = dyn.phase_portrait(ch, cfg.dynamics_config())
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "phase_grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_1", "replicator_velocity", "aggregate_velocity"])
        for row in zip(portrait.x1, portrait.replicator_velocity, portrait.aggregate_velocity):
            w.writerow([repr(float(v)) for v in row])
    with open(out / "phase_trajectories.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["start", "t", "replicator_x_1", "aggregate_x_1"])
        for start, tr in portrait.trajectories.items():
            for row in zip(tr["t"], tr["replicator"], tr["aggregate"]):
                w.writerow([repr(float(start))] + [repr(float(v)) for v in row])
    print(f"equilibrium x_1 = {portrait.equilibrium_x1:.6g}")
    return 0


def cmd_reproduce(cfg: CliConfig, only=None) -> int:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    checks = [c for c in acceptance.CHECKS
              if only is None or c.__name__ in only or _key_of(c) in only]
    results = []
    for check in checks:
        crit = check()
        print(f"{crit.line()} [{crit.seconds:.1f}s]", flush=True)
        results.append(crit)
    # timings go to stdout only so the files are byte-stable across runs
    (out / "report.json").write_text(_dump([c.as_dict() for c in results]))
    (out / "report.txt").write_text("".join(c.line() + "\n" for c in results))
    failed = [c.key for c in results if not c.passed]
    print("all criteria passed" if not failed else f"failed: {', '.join(failed)}")
    return 1 if failed else 0


def _key_of(check) -> str:
    return {c.__name__: f"AC{i}" for i, c in enumerate(acceptance.CHECKS, 1)}[check.__name__]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value file")
    common.add_argument("--mu", help="comma-separated channel availabilities")
    common.add_argument("--n", help="number of SUs")
    common.add_argument("--sigma", help="imitation factor")
    common.add_argument("--epsilon-u", dest="epsilon_u", help="imitation threshold")
    common.add_argument("--omega", help="payoff upper bound")
    common.add_argument("--alpha", help="payoff lower bound")
    common.add_argument("--policy", help="pisap or disap")
    common.add_argument("--scope", help="global or channel")
    common.add_argument("--payoff", help="expected or stochastic")
    common.add_argument("--slots", help="slots per iteration (stochastic payoffs)")
    common.add_argument("--iters", help="max iterations per run")
    common.add_argument("--runs", help="runs per batch")
    common.add_argument("--seed", help="master seed")
    common.add_argument("--exploration", help="random-jump probability (channel scope)")
    common.add_argument("--hysteresis", help="stable iterations required to declare convergence")
    common.add_argument("--full-horizon", dest="full_horizon", action="store_const", const="true",
                        help="keep iterating after convergence")
    common.add_argument("--workers", help="worker processes for batches")
    common.add_argument("--dt", help="RK4 step")
    common.add_argument("--t-max", dest="t_max", help="integration horizon")
    common.add_argument("--steps", help="iterations of the discrete maps")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="imitation-spectrum", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("simulate", parents=[common], help="Monte Carlo batch: trace, fairness, summary")
    sub.add_parser("dynamics", parents=[common], help="mean-field trajectories and deviation report")
    sub.add_parser("ne", parents=[common], help="print the equilibrium as JSON")
    sub.add_parser("phase", parents=[common], help="two-channel phase portrait data")
    rep = sub.add_parser("reproduce", parents=[common], help="run every acceptance experiment")
    rep.add_argument("--only", help="comma-separated criterion keys (AC1..AC9)")
    return parser


FLAG_KEYS = tuple(KEYS)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k, None) for k in FLAG_KEYS}
    try:
        cfg = parse_config(args.subcommand, args.config, overrides)
        if args.subcommand == "reproduce":
            only = set(args.only.split(",")) if args.only else None
            return cmd_reproduce(cfg, only)
        handler = {"simulate": cmd_simulate, "dynamics": cmd_dynamics,
                   "ne": cmd_ne, "phase": cmd_phase}[args.subcommand]
        return handler(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
