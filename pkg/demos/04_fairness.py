"""
Fairness over time under the same-channel constraint
====================================================

When SUs may only watch peers on their own channel, nobody needs global
information. Users still end up sharing throughput fairly over time. Jain's
index of the cumulative throughput measures how evenly it is shared.
"""

from imitation_spectrum import Policy, PolicyParams, SimConfig, run_batch

RUNS = 200  # the acceptance experiment uses 1000

for policy in Policy:
    cfg = SimConfig(params=PolicyParams(sigma=1.0, epsilon_u=0.01, scope="channel"),
                    policy=policy, runs=RUNS, seed=3, max_iterations=251,
                    stop_at_convergence=False)
    fair = run_batch(cfg).mean_fairness()
    first = next((t for t, v in enumerate(fair) if v >= 0.982), None)
    print(f"{policy.value}: Jain at 50/100/200 = "
          f"{fair[50]:.4f} / {fair[100]:.4f} / {fair[200]:.4f}; reaches 0.982 at {first}")
