"""Randomized-response baselines need more noise as the user count shrinks.

Each baseline is calibrated against a lower bound on its divergence, so the
flip probabilities here are optimistic: the true requirement is at least as large.
"""

from shuffledp.calibrate import calibrate

eps, delta = 1.0, 1e-6
print(f"{'n':>8} {'binary-rr':>10} {'b-rr (B=16)':>12} {'rappor':>8}")
for n in (1_000, 10_000, 100_000):
    flips = [
        calibrate("binary-rr", eps, delta, n=n).noise,
        calibrate("b-rr", eps, delta, n=n, buckets=16).noise,
        calibrate("rappor", eps, delta, n=n, buckets=16).noise,
    ]
    print(f"{n:8d} " + " ".join(f"{p:>{w}.4f}" for p, w in zip(flips, (10, 12, 8))))
