"""
Where the secondary users should end up
=======================================

Three channels are free 30%, 50% and 80% of the time. Fifty SUs split the
free time of each channel evenly. The equilibrium puts each channel's
share of users in proportion to its availability.
"""

import numpy as np

from imitation_spectrum import ChannelModel, epsilon_ne_check, nash_equilibrium, potential
from imitation_spectrum.model import best_deviation_gain

channels = ChannelModel([0.3, 0.5, 0.8])
x_star = nash_equilibrium(channels)
print("equilibrium shares:", x_star)
print("users per channel :", x_star * 50)

# At the equilibrium every SU earns the same amount.
print("payoffs           :", channels.mu / (x_star * 50))

# With whole users the best split is (9, 16, 25); nobody gains much by moving.
print("best single move from (9, 16, 25):", best_deviation_gain([9, 16, 25], channels))
print("is a 0.01-equilibrium:", epsilon_ne_check([9, 16, 25], channels, 0.01))

# The potential is largest at the equilibrium.
for x in (x_star, np.array([1 / 3, 1 / 3, 1 / 3]), np.array([0.6, 0.3, 0.1])):
    print(f"potential at {np.round(x, 3)}: {potential(x, channels, 50):.4f}")
