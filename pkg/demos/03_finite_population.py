"""
Fifty users imitating each other
================================

Each SU looks at one random peer (PISAP) or two (DISAP) and copies a better
channel with a probability that grows with the payoff gap. Small gaps below
the threshold are ignored, so the population freezes close to the
equilibrium split.
"""

from imitation_spectrum import Policy, PolicyParams, SimConfig, run_batch, run_once
from imitation_spectrum.sim import convergence_bound

params = PolicyParams(sigma=1.0, epsilon_u=0.01)
cfg = SimConfig(params=params, policy=Policy.PISAP, seed=1)

trace = run_once(cfg)
print("converged at iteration", trace.converged_at)
for t in (0, 5, 10, 20, trace.n_iterations - 1):
    print(f"  iteration {t:3d}: counts {trace.counts[t].tolist()}")

# A batch of 100 runs: where do they settle and how fast?
for policy in Policy:
    batch = run_batch(SimConfig(params=params, policy=policy, runs=100, seed=2))
    print(f"{policy.value}: mode {batch.final_counts_mode()}, "
          f"mean convergence {batch.convergence_mean():.1f}, max {batch.convergence_max()}, "
          f"all 0.02-equilibria: {batch.all_converged_epsilon_ne()}")

# The worst-case guarantee is very loose in practice.
print("worst-case bound:", round(convergence_bound(cfg)))
