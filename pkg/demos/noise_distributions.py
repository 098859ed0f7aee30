"""Infinitely divisible noise: split one central law into n per-user shares.

Each user adds a share of the noise. Because the laws are infinitely
divisible, the shares sum to exactly the central law, so the analyzer sees
the same noise a trusted curator would have added.
"""

import numpy as np

from shuffledp.dist import DiscreteLaplace, divide, moments, negative_binomial, pmf, poisson, sample, to_dcp

rng = np.random.default_rng(0)
n = 500

for name, law in [
    ("Poisson(20)", poisson(20.0)),
    ("NB(3, 0.6)", negative_binomial(3.0, 0.6)),
    ("DLap(0.5)", DiscreteLaplace(0.5)),
]:
    share = divide(law, n)
    total = sample(share, rng, size=(4000, n)).sum(axis=1)
    mean, var = moments(law)
    print(f"{name}: one share is {share!r}")
    print(f"  law mean/var       {mean:9.4f} {var:9.4f}")
    print(f"  sum of {n} shares  {total.mean():9.4f} {total.var():9.4f}")
    print(f"  pmf at 0: {float(pmf(law, 0)):.5f}, empirical {np.mean(total == 0):.5f}")
    if not isinstance(law, DiscreteLaplace):
        # DLap is a difference of two such laws rather than a single one
        print(f"  compound-Poisson form: {to_dcp(law)!r}")
