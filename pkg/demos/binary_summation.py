"""Private counting of bits through a shuffler.

Simulates repeated runs of each protocol on a fixed dataset and compares the
measured error and communication with the central reference.
"""

import numpy as np

from shuffledp.calibrate import calibrate
from shuffledp.shuffler import run_experiment

eps, delta, n, trials = 0.9, 1e-6, 5_000, 300
bits = np.random.default_rng(1).integers(0, 2, size=n)
print(f"true count: {bits.sum()} of {n}\n")

print(f"{'mechanism':>11} {'RMSE':>8} {'extra msgs/user':>16} {'bits/user':>10}")
for mech in ("central", "correlated", "poisson", "nb", "binary-rr"):
    params = calibrate(mech, eps, delta, n=n)
    result = run_experiment(bits, params, trials, seed=2)
    print(f"{mech:>11} {result.rmse:8.2f} {result.mean_extra_messages:16.4f} {result.bits_per_user:10.2f}")
