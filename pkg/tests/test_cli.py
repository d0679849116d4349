import csv
import json
import subprocess
import sys

import pytest

from imitation_spectrum.cli import ConfigError, main, parse_config
from imitation_spectrum.model import ChannelModel
from imitation_spectrum.policies import Policy, Scope


def write(tmp_path, text, name="cfg.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParseConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        cfg = parse_config("simulate", write(tmp_path, ""))
        sim = cfg.sim_config()
        assert sim.n_sus == 50 and sim.channels.mu.tolist() == [0.3, 0.5, 0.8]
        assert sim.params.sigma == 1.0 and sim.params.epsilon_u == 0.01

    def test_file_values_and_comments(self, tmp_path):
        path = write(tmp_path, "# channels\nmu = 0.3,0.5,0.8  # reference setting\nn=20\npolicy = disap\n"
                               "scope = channel\nfull-horizon = yes\n")
        cfg = parse_config("simulate", path)
        assert cfg.channels().mu.tolist() == ChannelModel([0.3, 0.5, 0.8]).mu.tolist()
        sim = cfg.sim_config()
        assert sim.n_sus == 20 and sim.policy is Policy.DISAP and sim.params.scope is Scope.SAME_CHANNEL
        assert not sim.stop_at_convergence

    def test_flags_override_file(self, tmp_path):
        path = write(tmp_path, "n = 20\nseed = 3\n")
        cfg = parse_config("simulate", path, {"n": "30"})
        assert cfg.values["n"] == 30 and cfg.values["seed"] == 3

    @pytest.mark.parametrize("text,key", [("sigma = -1\n", "sigma"), ("bogus = 1\n", "bogus"),
                                          ("n = many\n", "n"), ("mu = 0.3\n", "mu"),
                                          ("mu = 0.3,1.5\n", "mu"), ("policy = greedy\n", "policy"),
                                          ("epsilon_u = -0.1\n", "epsilon_u"), ("just text\n", "line 1")])
    def test_errors_name_the_key(self, tmp_path, text, key):
        with pytest.raises(ConfigError, match=key):
            parse_config("simulate", write(tmp_path, text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="no such file"):
            parse_config("ne", tmp_path / "nope.txt")


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "imitation_spectrum", *args],
                          capture_output=True, text=True)


class TestCommands:
    def test_ne_reference(self, capsys):
        assert main(["ne"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["x_star"] == pytest.approx([0.1875, 0.3125, 0.5], abs=1e-12)
        assert out["n_x_star"] == pytest.approx([9.375, 15.625, 25.0])
        assert out["payoff"] == pytest.approx([0.032] * 3)

    def test_ne_two_and_uniform(self, capsys):
        main(["ne", "--mu", "0.3,0.8"])
        assert json.loads(capsys.readouterr().out)["x_star"] == pytest.approx([3 / 11, 8 / 11])
        main(["ne", "--mu", "0.4,0.4,0.4,0.4"])
        assert json.loads(capsys.readouterr().out)["x_star"] == pytest.approx([0.25] * 4)

    def test_bad_value_exits_nonzero(self, capsys):
        assert main(["ne", "--sigma", "-1"]) != 0
        assert "sigma" in capsys.readouterr().err

    def test_simulate_default(self, tmp_path, capsys):
        assert main(["simulate", "--out", str(tmp_path)]) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        mode = summary["final_counts_mode"]
        assert max(abs(a - b) for a, b in zip(mode, (9, 16, 25))) <= 2
        assert summary["epsilon_ne"] is True
        assert summary["converged_at_max"] < summary["bound"]
        rows = list(csv.DictReader(open(tmp_path / "trace.csv")))
        assert list(rows[0]) == ["iteration", "channel", "count", "mean_payoff"]
        assert "converged" in capsys.readouterr().out

    def test_simulate_channel_disap(self, tmp_path):
        out = tmp_path / "o"
        assert main(["simulate", "--policy", "disap", "--scope", "channel", "--runs", "5",
                     "--iters", "300", "--full-horizon", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["jain_at"]["200"] is not None
        fair = list(csv.DictReader(open(out / "fairness.csv")))
        assert len(fair) == 300

    def test_simulate_is_byte_stable(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            res = run_cli("simulate", "--runs", "1", "--seed", "7", "--out", str(d))
            assert res.returncode == 0, res.stderr
        for name in ("trace.csv", "fairness.csv", "summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_dynamics(self, tmp_path):
        assert main(["dynamics", "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "deviation.json").read_text())
        assert rep["sup_norm"]["pi"] < 0.05 and rep["sup_norm"]["di"] < 0.05
        assert max(rep["closed_form_max_error"].values()) < 1e-8
        its = rep["iterations_to_1e-3"]
        assert its["constrained_di"] < its["constrained_pi"]
        for name in ("replicator", "aggregate", "replicator_closed_form", "aggregate_closed_form",
                     "constrained_pi", "constrained_di", "double_replicator", "double_aggregate"):
            header = next(csv.reader(open(tmp_path / f"{name}.csv")))
            assert header == ["t", "x_0", "x_1", "x_2"]

    def test_phase(self, tmp_path):
        assert main(["phase", "--mu", "0.3,0.8", "--out", str(tmp_path)]) == 0
        grid = list(csv.DictReader(open(tmp_path / "phase_grid.csv")))
        assert list(grid[0]) == ["x_1", "replicator_velocity", "aggregate_velocity"]
        for row in grid:
            x, v = float(row["x_1"]), float(row["replicator_velocity"])
            if abs(x - 3 / 11) > 1e-9:
                assert (v > 0) == (x < 3 / 11)
        assert (tmp_path / "phase_trajectories.csv").exists()

    def test_phase_rejects_three_channels(self, tmp_path, capsys):
        assert main(["phase", "--out", str(tmp_path)]) != 0
        assert "mu" in capsys.readouterr().err

    def test_unknown_flag(self):
        res = run_cli("ne", "--bogus", "1")
        assert res.returncode != 0

    def test_reproduce_subset_is_byte_stable(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            res = run_cli("reproduce", "--only", "AC1,AC4,AC5,AC6", "--out", str(d))
            assert res.returncode == 0, res.stdout + res.stderr
            assert res.stdout.count("[PASS]") == 4
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        report = json.loads((a / "report.json").read_text())
        assert [r["key"] for r in report] == ["AC1", "AC4", "AC5", "AC6"]
        assert all({"measured", "expected", "passed"} <= set(r) for r in report)
