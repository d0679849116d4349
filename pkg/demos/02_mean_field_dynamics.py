"""
Large-population dynamics
=========================

In a very large population, proportional imitation follows the replicator
flow and double imitation follows a sped-up aggregate monotone flow. Both
have closed forms. Under the same-channel constraint the dynamics become
two-step maps, which are well approximated by two interleaved copies of a
one-step map.
"""

import numpy as np

from imitation_spectrum import ChannelModel, DynamicsConfig, nash_equilibrium
from imitation_spectrum import dynamics as dyn

channels = ChannelModel([0.3, 0.5, 0.8])
cfg = DynamicsConfig(n_sus=50, sigma=1.0)
x0 = np.array([0.7, 0.2, 0.1])

# Numerical integration against the exact solution.
times, rk4 = dyn.integrate(lambda x: dyn.replicator_rhs(x, cfg, channels), x0, cfg)
exact = dyn.replicator_closed_form(x0, times, cfg, channels)
print("RK4 vs closed form, max error:", np.abs(rk4 - exact).max())

# Double imitation moves faster by a constant factor.
print("aggregate speed-up factor    :", dyn.aggregate_gain(cfg, channels))

# Same-channel imitation: exact maps against their interleaved approximations.
u = np.full(3, 1 / 3)
for name, exact_map, step in (("PI", dyn.constrained_pi_map, dyn.double_replicator_step),
                              ("DI", dyn.constrained_di_map, dyn.double_aggregate_step)):
    traj = dyn.constrained_trajectory(exact_map, u, u, 1000, cfg, channels)
    apx = dyn.interleaved_trajectory(step, u, u, 1000, cfg, channels)
    print(f"{name}: sup-norm gap {np.abs(traj - apx).max():.2e}, "
          f"within 1e-3 of equilibrium after {dyn.first_within(traj, channels, 1e-3)} iterations")

# The one-step map is a contraction.
jac = dyn.double_replicator_jacobian(cfg, channels)
print("Jacobian infinity norm:", dyn.jacobian_inf_norm(jac))
print("equilibrium:", nash_equilibrium(channels))
