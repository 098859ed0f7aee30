"""How much noise does a shuffled sum need, and what does it cost?

For each epsilon, calibrate Poisson, negative binomial and correlated noise,
then print the certified divergence and the per-user message overhead. The
negative binomial recipe is stated for epsilon below 1.
"""

from shuffledp.calibrate import calibrate, poisson_lambda_closed_form

delta, n = 1e-6, 10_000

print(f"{'eps':>5} {'mechanism':>11} {'delta (certified)':>18} {'extra msgs/user':>16} {'RMSE':>8}")
for eps in (0.9, 0.5, 0.1):
    for mech in ("poisson", "nb", "correlated"):
        params = calibrate(mech, eps, delta, n=n)
        report = params.check()
        print(
            f"{eps:5.2f} {mech:>11} {report.upper:18.3e} "
            f"{params.expected_extra_messages():16.5f} {params.analytic_rmse():8.3f}"
        )
    ref = calibrate("central", eps, delta)
    print(f"{eps:5.2f} {'central':>11} {'':>18} {0.0:16.5f} {ref.analytic_rmse():8.3f}")

# the closed-form rate is a safe but loose starting point for the search
lam_search = calibrate("poisson", 1.0, delta).noise
print(f"\nPoisson rate at eps=1: closed form {poisson_lambda_closed_form(1.0, delta):.1f}, search {lam_search:.2f}")
