import csv
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from imitation_spectrum import dynamics as dyn
from imitation_spectrum.model import ChannelModel, nash_equilibrium

MU = (0.3, 0.5, 0.8)
CH = ChannelModel(MU)
CFG = dyn.DynamicsConfig(n_sus=50, sigma=1.0)

simplex3 = st.lists(st.floats(0.001, 1.0), min_size=3, max_size=3).map(lambda v: np.array(v) / sum(v))


def random_migration(rng):
    return rng.dirichlet(np.ones(9)).reshape(3, 3)


class TestFlows:
    def test_rhs_zero_at_equilibrium(self):
        x = nash_equilibrium(CH)
        np.testing.assert_allclose(dyn.replicator_rhs(x, CFG, CH), 0, atol=1e-15)
        np.testing.assert_allclose(dyn.aggregate_monotone_rhs(x, CFG, CH), 0, atol=1e-15)

    def test_boundary_affine_form(self):
        ch = ChannelModel([0.3, 0.8])
        # mu/N = [0.006, 0.016], pibar = 0.022
        np.testing.assert_allclose(dyn.replicator_rhs([1.0, 0.0], CFG, ch), [-0.016, 0.016], atol=1e-15)
        np.testing.assert_allclose(dyn.replicator_rhs([0.0, 1.0], CFG, ch), [0.006, -0.006], atol=1e-15)

    def test_aggregate_gain(self):
        assert dyn.aggregate_gain(CFG, CH) == pytest.approx(1.968)
        x = np.array([0.5, 0.3, 0.2])
        np.testing.assert_allclose(dyn.aggregate_monotone_rhs(x, CFG, CH),
                                   1.968 * dyn.replicator_rhs(x, CFG, CH), rtol=1e-12)

    def test_tangency(self):
        xs = np.random.default_rng(0).dirichlet(np.ones(3), size=1000)
        assert np.abs(dyn.replicator_rhs(xs, CFG, CH).sum(axis=1)).max() < 1e-15
        assert np.abs(dyn.aggregate_monotone_rhs(xs, CFG, CH).sum(axis=1)).max() < 1e-15

    @given(simplex3)
    def test_sign_follows_payoff_gap(self, x):
        pi = dyn.channel_payoffs(x, CH, 50)
        gap = pi - dyn.average_payoff(CH, 50)
        v = dyn.aggregate_monotone_rhs(x, CFG, CH)
        # x_i (pi_i - pibar) and mu_i/N - x_i pibar are the same number
        np.testing.assert_allclose(v, 1.968 * x * gap, atol=1e-15)

    def test_channel_payoffs_empty(self):
        assert np.isinf(dyn.channel_payoffs([0.0, 1.0, 0.0], CH, 50)[0])


class TestClosedForms:
    def test_initial_condition_and_limit(self):
        x0 = np.array([0.6, 0.3, 0.1])
        for f in (dyn.replicator_closed_form, dyn.aggregate_closed_form):
            np.testing.assert_allclose(f(x0, 0.0, CFG, CH), x0, atol=1e-15)
            np.testing.assert_allclose(f(x0, 1e6, CFG, CH), nash_equilibrium(CH), atol=1e-12)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            dyn.replicator_closed_form([0.5, 0.5], -1.0, CFG, ChannelModel([0.3, 0.8]))

    def test_two_channel_against_rk4(self):
        ch = ChannelModel([0.3, 0.8])
        x0 = np.array([0.9, 0.1])
        cfg = dyn.DynamicsConfig(n_sus=50, t_max=50.0)
        times, traj = dyn.integrate(lambda x: dyn.replicator_rhs(x, cfg, ch), x0, cfg)
        np.testing.assert_allclose(traj[-1], dyn.replicator_closed_form(x0, 50.0, cfg, ch), atol=1e-8)

    @pytest.mark.parametrize("rhs,closed", [(dyn.replicator_rhs, dyn.replicator_closed_form),
                                            (dyn.aggregate_monotone_rhs, dyn.aggregate_closed_form)])
    def test_reference_setting_against_rk4(self, rhs, closed):
        x0 = np.array([0.7, 0.2, 0.1])
        times, traj = dyn.integrate(lambda x: rhs(x, CFG, CH), x0, CFG)
        assert np.abs(traj - closed(x0, times, CFG, CH)).max() < 1e-8


class TestIntegrator:
    def test_zero_rhs_is_constant(self):
        x0 = np.array([0.2, 0.3, 0.5])
        _, traj = dyn.integrate(lambda x: np.zeros_like(x), x0, dyn.DynamicsConfig(t_max=1.0))
        np.testing.assert_array_equal(traj, np.tile(x0, (traj.shape[0], 1)))

    def test_fourth_order(self):
        # a stiff rate makes the truncation error visible above round-off
        ch = ChannelModel([0.9, 0.6])
        x0 = np.array([0.05, 0.95])
        errs = []
        for dt in (0.2, 0.1):
            c = dyn.DynamicsConfig(n_sus=1, sigma=1.0, dt=dt, t_max=4.0)
            times, traj = dyn.integrate(lambda x: dyn.replicator_rhs(x, c, ch), x0, c)
            errs.append(np.abs(traj - dyn.replicator_closed_form(x0, times, c, ch)).max())
        ratio = errs[0] / errs[1]
        assert 13 < ratio < 19, ratio

    def test_blow_up_is_reported(self):
        cfg = dyn.DynamicsConfig(dt=1.0, t_max=5.0)
        with pytest.raises(dyn.IntegrationError):
            dyn.integrate(lambda x: np.array([-10.0, 5.0, 5.0]), np.array([0.2, 0.3, 0.5]), cfg)
        with pytest.raises(dyn.IntegrationError):
            dyn.integrate(lambda x: x * np.nan, np.array([0.2, 0.3, 0.5]), cfg)

    def test_stacked_starts(self):
        x0 = np.array([[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]])
        _, both = dyn.integrate(lambda x: dyn.replicator_rhs(x, CFG, CH), x0, dyn.DynamicsConfig(t_max=5))
        _, one = dyn.integrate(lambda x: dyn.replicator_rhs(x, CFG, CH), x0[1], dyn.DynamicsConfig(t_max=5))
        np.testing.assert_allclose(both[:, 1], one, atol=1e-15)

    def test_config_validation(self):
        for kwargs in ({"dt": 0}, {"sigma": -1}, {"alpha": 2.0}, {"n_sus": 0}, {"convergence_tol": 0}):
            with pytest.raises(ValueError):
                dyn.DynamicsConfig(**kwargs)


class TestDiscreteMaps:
    def test_equilibrium_is_fixed(self):
        x = nash_equilibrium(CH)
        for step in (dyn.double_replicator_step, dyn.double_aggregate_step):
            np.testing.assert_allclose(step(x, CFG, CH), x, atol=1e-15)

    def test_jacobian(self):
        jac = dyn.double_replicator_jacobian(CFG, CH)
        assert dyn.jacobian_inf_norm(jac) == pytest.approx(0.968, abs=1e-12)
        x = np.array([0.2, 0.5, 0.3])
        h = 1e-6
        fd = np.column_stack([(dyn.double_replicator_step(x + h * e, CFG, CH)
                               - dyn.double_replicator_step(x - h * e, CFG, CH)) / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(fd, jac, atol=1e-8)

    @pytest.mark.parametrize("step", [dyn.double_replicator_step, dyn.double_aggregate_step])
    def test_converges_from_random_starts(self, step):
        xs = np.random.default_rng(5).dirichlet(np.ones(3), size=100)
        for x0 in xs:
            x, k = dyn.iterate_to_fixed_point(step, x0, CFG, CH, max_steps=2000)
            assert k is not None and k <= 2000

    @given(simplex3)
    def test_aggregate_moves_further(self, x):
        r = dyn.double_replicator_step(x, CFG, CH) - x
        a = dyn.double_aggregate_step(x, CFG, CH) - x
        assert np.abs(a).sum() >= np.abs(r).sum() - 1e-15

    def test_clamp_warns(self):
        big = dyn.DynamicsConfig(n_sus=1, sigma=5.0)
        with pytest.warns(dyn.SimplexClampWarning):
            out = dyn.double_replicator_step(np.array([0.1, 0.1, 0.8]), big, CH)
        assert out.min() >= 0 and out.sum() == pytest.approx(1.0)

    def test_stack_rows_independent(self):
        xs = np.random.default_rng(2).dirichlet(np.ones(3), size=5)
        stacked = dyn.double_aggregate_step(xs, CFG, CH)
        for x, row in zip(xs, stacked):
            np.testing.assert_allclose(dyn.double_aggregate_step(x, CFG, CH), row, atol=1e-16)


def pi_expansion(m, x_tm1, sigma, n):
    """Direct evaluation of the proportional-imitation next mixture."""
    c = len(x_tm1)
    pi = np.array(MU) / (x_tm1 * n)
    x_now = m.sum(axis=1)
    out = np.zeros(c)
    for i in range(c):
        acc = x_tm1[i] + sigma * pi[i] * x_tm1[i]
        for j in range(c):
            for l in range(c):
                acc -= sigma * pi[l] * m[j, i] * m[j, l] / x_now[j]
        out[i] = acc
    return out


def di_expansion(m, x_tm1, sigma, n):
    """Direct evaluation of the double-imitation next mixture (omega=1, alpha=0)."""
    c = len(x_tm1)
    pi = np.array(MU) / (x_tm1 * n)
    x_now = m.sum(axis=1)
    out = np.zeros(c)
    for i in range(c):
        for j in range(c):
            pibar_j = sum(m[j, l] * pi[l] for l in range(c)) / x_now[j]
            out[i] += m[j, i] + sigma * m[j, i] * (2 - pibar_j) * (pi[i] - pibar_j)
    return out


class TestConstrainedMaps:
    @pytest.mark.parametrize("map_fn,oracle", [(dyn.constrained_pi_map, pi_expansion),
                                               (dyn.constrained_di_map, di_expansion)])
    def test_matches_expansion(self, map_fn, oracle):
        rng = np.random.default_rng(11)
        for _ in range(100):
            m = random_migration(rng)
            m2, x2 = map_fn(m, m.sum(axis=0), CFG, CH)
            np.testing.assert_allclose(x2, oracle(m, m.sum(axis=0), 1.0, 50), atol=1e-14)
            assert m2.sum() == pytest.approx(1.0, abs=1e-12)
            np.testing.assert_allclose(m2.sum(axis=0), m.sum(axis=1), atol=1e-14)

    @pytest.mark.parametrize("map_fn", [dyn.constrained_pi_map, dyn.constrained_di_map])
    def test_equilibrium_split_is_stationary(self, map_fn):
        x = nash_equilibrium(CH)
        m = np.outer(x, x)
        _, x2 = map_fn(m, x, CFG, CH)
        np.testing.assert_allclose(x2, x, atol=1e-15)

    def test_rejects_inconsistent_history(self):
        m = np.full((3, 3), 1 / 9)
        with pytest.raises(ValueError):
            dyn.constrained_pi_map(m, np.array([0.5, 0.25, 0.25]), CFG, CH)
        with pytest.raises(ValueError):
            dyn.constrained_pi_map(m * 2, None, CFG, CH)

    def test_empty_rows(self):
        m = np.zeros((3, 3))
        m[0, 1], m[2, 2] = 0.4, 0.6
        m2, x2 = dyn.constrained_di_map(m, None, CFG, CH)
        assert x2.sum() == pytest.approx(1.0) and (m2[:, 1] == 0).all()

    def test_approximation_exact_from_product_start(self):
        u = np.full(3, 1 / 3)
        exact = dyn.constrained_trajectory(dyn.constrained_pi_map, u, u, 200, CFG, CH)
        apx = dyn.interleaved_trajectory(dyn.double_replicator_step, u, u, 200, CFG, CH)
        assert np.abs(exact - apx).max() < 1e-12

    def test_approximation_close_from_mixed_start(self):
        # x(0) and x(1) differ, so the interleaved copies start apart
        x0, x1 = np.array([0.6, 0.3, 0.1]), np.array([0.2, 0.2, 0.6])
        for map_fn, step in ((dyn.constrained_pi_map, dyn.double_replicator_step),
                             (dyn.constrained_di_map, dyn.double_aggregate_step)):
            exact = dyn.constrained_trajectory(map_fn, x0, x1, 400, CFG, CH)
            apx = dyn.interleaved_trajectory(step, x0, x1, 400, CFG, CH)
            assert np.abs(exact - apx).max() < 0.05
            np.testing.assert_allclose(exact[-1], nash_equilibrium(CH), atol=1e-3)

    def test_di_faster_than_pi(self):
        u = np.full(3, 1 / 3)
        pi = dyn.first_within(dyn.constrained_trajectory(dyn.constrained_pi_map, u, u, 1000, CFG, CH), CH, 1e-3)
        di = dyn.first_within(dyn.constrained_trajectory(dyn.constrained_di_map, u, u, 1000, CFG, CH), CH, 1e-3)
        assert di < pi


class TestPhasePortrait:
    def test_two_channel_attractor(self):
        ch = ChannelModel([0.3, 0.8])
        pp = dyn.phase_portrait(ch, CFG)
        assert pp.equilibrium_x1 == pytest.approx(3 / 11)
        below = pp.x1 < 3 / 11 - 1e-9
        above = pp.x1 > 3 / 11 + 1e-9
        assert (pp.replicator_velocity[below] > 0).all() and (pp.replicator_velocity[above] < 0).all()
        assert np.array_equal(np.sign(pp.replicator_velocity), np.sign(pp.aggregate_velocity))
        for tr in pp.trajectories.values():
            assert abs(tr["replicator"][-1] - 3 / 11) < abs(tr["replicator"][0] - 3 / 11) + 1e-12

    def test_rejects_three_channels(self):
        with pytest.raises(ValueError):
            dyn.phase_portrait(CH, CFG)


def test_trajectory_csv(tmp_path):
    times = np.array([0.0, 0.5])
    states = np.array([[0.25, 0.75], [0.3, 0.7]])
    path = tmp_path / "t.csv"
    dyn.write_trajectory_csv(path, times, states)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "x_0", "x_1"]
    assert [float(v) for v in rows[2]] == [0.5, 0.3, 0.7]


def test_no_warning_in_normal_operation():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dyn.interleaved_trajectory(dyn.double_aggregate_step, np.full(3, 1 / 3), np.full(3, 1 / 3), 100, CFG, CH)
