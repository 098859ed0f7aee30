"""Noise calibration: closed-form parameter recipes and numerical searches.

Numerical calibrations look for the least noise whose exact divergence (or,
for baselines, divergence lower bound) stays below the target ``delta``. All
searches are deterministic bisections in log scale; the correlated mechanism
adds an outer golden-section search over the masking-noise shape.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Union

from scipy import optimize

from .dist import (
    DiscreteLaplace,
    IntegerDistribution,
    InvalidParameter,
    NegativeBinomial,
    NoiseTriple,
    Poisson,
    TruncationBudgetExceeded,
    geometric,
    negative_binomial,
)
from .divergence import (
    BASELINE_KINDS,
    PrivacyReport,
    baseline_delta_lower,
    correlated_divergence,
    delta_summation_divergence,
    poisson_histogram_divergence,
)

MAX_EPSILON = 8.0
SEARCH_REL_TOL = 1e-4
MECHANISMS = ("poisson", "nb", "correlated", "binary-rr", "b-rr", "rappor", "frag-rappor", "central")
OPTIMISTIC = frozenset({"b-rr", "rappor", "frag-rappor"})
HISTOGRAM_ONLY = frozenset({"b-rr", "rappor", "frag-rappor"})


class CalibrationError(RuntimeError):
    """No feasible parameter was found inside the search range."""


Noise = Union[float, tuple, NoiseTriple, None]


@dataclass(frozen=True)
class MechanismParams:
    """Calibrated configuration of one mechanism.

    Attributes:
        mechanism: Mechanism name, one of ``MECHANISMS``.
        epsilon: Target privacy-loss level.
        delta: Target failure probability.
        noise: ``lam`` for poisson, ``(r, p)`` for nb, a ``NoiseTriple`` for
            correlated, the flip probability for baselines, None for central.
        n: Number of users, when the calibration depends on it.
        buckets: Number of histogram buckets; None for binary summation.
        sensitivity: Largest per-user input for summation.
        gamma: Budget split of the near-central recipe, if used.
        eps1: Privacy level matched by the ``d1 - d2`` error for correlated noise.
        optimistic: True when calibrated against a divergence lower bound.
        heuristic: True when produced by a non-certified optimizer.
    """

    mechanism: str
    epsilon: float
    delta: float
    noise: Noise = None
    n: int | None = None
    buckets: int | None = None
    sensitivity: int = 1
    gamma: float | None = None
    eps1: float | None = None
    optimistic: bool = False
    heuristic: bool = False
    extras: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def is_histogram(self) -> bool:
        return self.buckets is not None

    @property
    def noise_distribution(self) -> IntegerDistribution:
        """Central noise law of a distributed (poisson or nb) mechanism."""
        if self.mechanism == "poisson":
            return Poisson(self.noise)
        if self.mechanism == "nb":
            return NegativeBinomial(*self.noise)
        raise InvalidParameter(f"{self.mechanism} has no single noise distribution")

    @property
    def central_scale(self) -> float:
        """Discrete Laplace parameter of the central reference at this privacy level."""
        return self.epsilon / 2 if self.is_histogram else self.epsilon

    def expected_extra_messages(self, n: int | None = None) -> float:
        """Expected messages per user beyond the signal, in closed form."""
        n = n or self.n
        b = self.buckets or 1
        m = self.mechanism
        if m == "central" or m in ("binary-rr", "b-rr", "rappor"):
            return 0.0
        if m == "frag-rappor":
            return self.noise * (b - 2)
        if n is None:
            raise InvalidParameter("n is required for the per-user message overhead")
        if m == "poisson":
            return b * self.noise / n
        if m == "nb":
            return b * self.noise_distribution.mean / n
        return b * self.noise.expected_noise_messages / n

    def analytic_rmse(self) -> float | None:
        """Per-coordinate RMSE when it does not depend on the data, else None."""
        m = self.mechanism
        if m == "central":
            return math.sqrt(DiscreteLaplace(self.central_scale).variance)
        if m in ("poisson", "nb"):
            if self.is_histogram:
                return math.sqrt(self.noise_distribution.variance)
            return math.sqrt(self.noise_distribution.variance)
        if m == "correlated":
            return math.sqrt(self.noise.error_variance)
        if m == "binary-rr" and self.n is not None:
            p = self.noise
            return math.sqrt(self.n * p * (1 - p)) / (1 - 2 * p)
        return None

    def check(self) -> PrivacyReport:
        """Recomputes the divergence this calibration was validated against."""
        return check_noise(self)

    def record(self) -> str:
        """Compact description of the calibrated noise."""
        m = self.mechanism
        if m == "poisson":
            return f"lambda={self.noise!r}"
        if m == "nb":
            return f"r={self.noise[0]!r};p={self.noise[1]!r}"
        if m == "correlated":
            d3 = self.noise.d3
            r, p = (d3.r, d3.p) if isinstance(d3, NegativeBinomial) else (0.0, 0.0)
            return f"r={r!r};p={p!r};eps1={self.eps1!r}"
        if m == "central":
            return f"dlap={self.central_scale!r}"
        return f"p_flip={self.noise!r}"


def _check_privacy(eps: float, delta: float) -> None:
    if not 0 < eps <= MAX_EPSILON:
        raise InvalidParameter(f"epsilon must lie in (0, {MAX_EPSILON}], got {eps}")
    if not 0 < delta < 1:
        raise InvalidParameter(f"delta must lie in (0, 1), got {delta}")


def _check_sensitivity(sensitivity: int) -> int:
    if int(sensitivity) != sensitivity or sensitivity < 1:
        raise InvalidParameter(f"sensitivity must be a positive integer, got {sensitivity}")
    return int(sensitivity)


def _budget(delta: float) -> float:
    # truncation stays well below the search tolerance
    return 1e-4 * delta


# --- closed forms ------------------------------------------------------------


def poisson_lambda_closed_form(eps: float, delta: float, sensitivity: int = 1) -> float:
    """Poisson rate guaranteed to make the distributed Poisson mechanism private."""
    _check_privacy(eps, delta)
    k = _check_sensitivity(sensitivity)
    gap = -math.expm1(-eps / k)
    return 16 * math.log(10 / delta) / gap**2 + 2 * k / gap


def nb_params_closed_form(eps: float, delta: float, sensitivity: int = 1) -> tuple[float, float]:
    """Negative binomial ``(r, p)`` guaranteed to make the distributed NB mechanism private."""
    if not 0 < eps < 1 or not 0 < delta < 1:
        raise InvalidParameter("the negative binomial recipe needs eps and delta in (0, 1)")
    k = _check_sensitivity(sensitivity)
    return 3 * (1 + math.log(1 / delta)), math.exp(-0.2 * eps / k)


# --- search helpers ----------------------------------------------------------


def smallest_feasible(
    feasible: Callable[[float], bool],
    start: float,
    rel_tol: float = SEARCH_REL_TOL,
    grow_limit: float = 10.0,
    floor: float = 0.0,
) -> float:
    """Smallest ``x`` with ``feasible(x)``, to relative tolerance, by log-scale bisection.

    Assumes feasibility is monotone in ``x``. The bracket starts at ``start``,
    grows up to ``grow_limit * start`` if needed, and shrinks by halving toward
    ``floor``. If ``floor`` itself is feasible it is returned.

    Raises:
        CalibrationError: if nothing up to ``grow_limit * start`` is feasible.
    """
    hi = start
    while not feasible(hi):
        hi *= 2
        if hi > grow_limit * start:
            raise CalibrationError(f"no feasible value up to {grow_limit} x {start:g}")
    lo = hi / 2
    while lo > floor and feasible(lo):
        hi, lo = lo, lo / 2
    if lo <= floor:
        if feasible(floor):
            return floor
        lo = floor
    while hi - lo > rel_tol * hi:
        mid = math.sqrt(lo * hi) if lo > 0 else hi / 2
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


# --- distributed mechanisms ---------------------------------------------------


@functools.lru_cache(maxsize=512)
def calibrate_poisson(eps: float, delta: float, sensitivity: int = 1, rel_tol: float = SEARCH_REL_TOL) -> float:
    """Smallest Poisson rate whose exact summation divergence is at most ``delta``.

    Raises:
        CalibrationError: when nothing below ten times the closed-form rate works.
    """
    _check_privacy(eps, delta)
    k = _check_sensitivity(sensitivity)

    def feasible(lam: float) -> bool:
        return lam > 0 and delta_summation_divergence(Poisson(lam), k, eps, _budget(delta)).upper <= delta

    return smallest_feasible(feasible, poisson_lambda_closed_form(eps, delta, k), rel_tol)


@functools.lru_cache(maxsize=512)
def calibrate_poisson_histogram(eps: float, delta: float, rel_tol: float = SEARCH_REL_TOL) -> float:
    """Smallest per-bucket Poisson rate passing the two-bucket divergence check."""
    _check_privacy(eps, delta)

    def feasible(lam: float) -> bool:
        return lam > 0 and poisson_histogram_divergence(lam, eps, _budget(delta)).upper <= delta

    return smallest_feasible(feasible, poisson_lambda_closed_form(eps / 2, delta / 2), rel_tol)


def rmse_matched_eps1(eps: float, factor: float = 1.2) -> float:
    """Privacy level whose discrete Laplace error is ``factor`` times that at ``eps``.

    Solves ``Var(DLap(eps1)) = factor^2 Var(DLap(eps))``.
    """
    if not eps > 0:
        raise InvalidParameter(f"epsilon must be positive, got {eps}")
    if factor < 1:
        raise InvalidParameter(f"factor must be at least 1, got {factor}")
    if factor == 1:
        return float(eps)
    target = 2 * math.log(factor) + _log_dlap_var(eps)

    def gap(s: float) -> float:
        return _log_dlap_var(s) - target

    lo = eps
    while gap(lo) < 0:
        lo /= 2
    return optimize.brentq(gap, lo, eps, xtol=1e-15, rtol=1e-15, maxiter=500)


def _log_dlap_var(s: float) -> float:
    # log of 2 e^-s / (1 - e^-s)^2
    return math.log(2) - s - 2 * math.log(-math.expm1(-s))


def _nb_or_zero(r: float, scale: float) -> IntegerDistribution:
    """Masking noise ``NB(r, 1 - 1/scale)``; ``scale = 1`` means no masking."""
    return negative_binomial(r, 1 - 1 / scale)


def smallest_mask(
    eps: float, delta: float, q: float, r: float, rel_tol: float = SEARCH_REL_TOL, max_scale: float = 2.0**22
) -> float | None:
    """Smallest ``1 / (1 - p)`` making ``(NB(1,q), NB(1,q), NB(r,p))`` private, or None.

    The masking noise grows with ``p``, so the search runs over ``scale = 1/(1-p)``.
    """
    g = geometric(q)

    def feasible(scale: float) -> bool:
        try:
            triple = NoiseTriple(g, g, _nb_or_zero(r, scale))
            return correlated_divergence(triple, eps, _budget(delta)).upper <= delta
        except TruncationBudgetExceeded:
            return False

    try:
        return smallest_feasible(feasible, 2.0, rel_tol, grow_limit=max_scale / 2, floor=1.0)
    except CalibrationError:
        return None


def _golden_min(f: Callable[[float], float], lo: float, hi: float, iterations: int) -> float:
    """Golden-section minimization; ties (including both infinite) move right."""
    inv = (math.sqrt(5) - 1) / 2
    c = hi - inv * (hi - lo)
    d = lo + inv * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(iterations):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - inv * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv * (hi - lo)
            fd = f(d)
    return (lo + hi) / 2


@functools.lru_cache(maxsize=256)
def calibrate_correlated(
    eps: float,
    delta: float,
    n: int | None = None,
    factor: float = 1.2,
    r_max: float = 1e4,
    iterations: int = 40,
) -> MechanismParams:
    """Correlated noise with RMSE ``factor`` times central and few noise messages.

    ``d1 = d2 = NB(1, e^-eps1)`` with ``eps1`` from :func:`rmse_matched_eps1`.
    The masking noise ``d3 = NB(r, p)`` minimizes its mean ``r p / (1 - p)``
    subject to the exact divergence check: the least ``p`` for each ``r`` comes
    from bisection, and ``log r`` in ``[0, log r_max]`` is searched by golden
    section. The result is the best feasible point visited, which is a
    heuristic optimum.

    Raises:
        CalibrationError: when no visited ``r`` admits a feasible ``p``.
    """
    _check_privacy(eps, delta)
    eps1 = rmse_matched_eps1(eps, factor)
    q = math.exp(-eps1)
    visited: dict[float, tuple[float, float]] = {}

    def cost(log_r: float) -> float:
        r = math.exp(log_r)
        scale = smallest_mask(eps, delta, q, r)
        if scale is None:
            return math.inf
        visited[r] = (scale, r * (scale - 1))
        return r * (scale - 1)

    final = _golden_min(cost, 0.0, math.log(r_max), iterations)
    cost(final)
    if not visited:
        raise CalibrationError(f"no feasible masking noise at eps={eps}, delta={delta}")
    r_best = min(visited, key=lambda r: (visited[r][1], r))
    scale = visited[r_best][0]
    g = geometric(q)
    triple = NoiseTriple(g, g, _nb_or_zero(r_best, scale))
    return MechanismParams(
        "correlated", eps, delta, triple, n=n, eps1=eps1, heuristic=True,
        extras={"factor": factor, "r": r_best, "scale": scale},
    )


def near_central_params(eps: float, delta: float, gamma: float) -> MechanismParams:
    """Correlated noise from the composition recipe, with error ``DLap((1-gamma) eps)``.

    Splits ``eps`` into ``eps1 = (1-gamma) eps`` for the difference noise and
    ``eps2 = min(0.5, gamma eps)`` for the mask, with
    ``delta2 = delta3 = delta / (e^eps1 + 2 e^(2 eps1))`` and sensitivity
    ``ceil(ln(1/delta2) / eps1)`` for the negative binomial mask.
    """
    _check_privacy(eps, delta)
    if not 0 < gamma < 0.5:
        raise InvalidParameter(f"gamma must lie in (0, 1/2), got {gamma}")
    eps1 = (1 - gamma) * eps
    eps2 = min(0.5, gamma * eps)
    delta2 = delta / (math.exp(eps1) + 2 * math.exp(2 * eps1))
    width = math.ceil(math.log(1 / delta2) / eps1)
    r, p = nb_params_closed_form(eps2, delta2, width)
    g = geometric(math.exp(-eps1))
    triple = NoiseTriple(g, g, NegativeBinomial(r, p))
    return MechanismParams(
        "correlated", eps, delta, triple, gamma=gamma, eps1=eps1,
        extras={"eps2": eps2, "delta2": delta2, "delta3": delta2, "mask_sensitivity": width},
    )


def histogram_params(eps: float, delta: float, gamma: float, buckets: int, n: int | None = None) -> MechanismParams:
    """Near-central correlated noise per bucket for histograms.

    Moving one user changes two buckets, so each bucket gets the
    ``(eps/2, delta/2)`` recipe. Reported privacy stays ``(eps, delta)``.
    """
    _check_buckets(buckets)
    half = near_central_params(eps / 2, delta / 2, gamma)
    return replace(half, epsilon=eps, delta=delta, buckets=buckets, n=n)


def calibrate_correlated_histogram(
    eps: float, delta: float, buckets: int, n: int | None = None, factor: float = 1.2
) -> MechanismParams:
    """Numerically calibrated correlated noise per bucket at ``(eps/2, delta/2)``."""
    _check_buckets(buckets)
    half = calibrate_correlated(eps / 2, delta / 2, None, factor)
    return replace(half, epsilon=eps, delta=delta, buckets=buckets, n=n)


def _check_buckets(buckets) -> None:
    if buckets is None or int(buckets) != buckets or buckets < 2:
        raise InvalidParameter(f"histograms need at least 2 buckets, got {buckets}")


# --- baselines ---------------------------------------------------------------


@functools.lru_cache(maxsize=512)
def calibrate_baseline(kind: str, eps: float, delta: float, n: int, buckets: int = 2) -> float:
    """Smallest flip probability whose divergence (bound) at ``eps`` is at most ``delta``.

    Raises:
        CalibrationError: when even the noisiest setting fails.
    """
    _check_privacy(eps, delta)
    if kind not in BASELINE_KINDS:
        raise InvalidParameter(f"unknown baseline kind {kind!r}")
    top = 1.0 if kind == "b-rr" else 0.5

    def feasible(p: float) -> bool:
        return p > 0 and baseline_delta_lower(kind, min(p, top), eps, n, buckets).delta <= delta

    if not feasible(top):
        raise CalibrationError(f"{kind} cannot reach delta={delta} at eps={eps}")
    p = smallest_feasible(feasible, top, floor=0.0)
    return min(p, top)


def baseline_params(kind: str, eps: float, delta: float, n: int, buckets: int | None = None) -> MechanismParams:
    if kind in HISTOGRAM_ONLY:
        _check_buckets(buckets)
    p = calibrate_baseline(kind, eps, delta, n, buckets or 2)
    return MechanismParams(kind, eps, delta, p, n=n, buckets=buckets, optimistic=kind in OPTIMISTIC)


# --- dispatch ----------------------------------------------------------------


def calibrate(
    mechanism: str,
    eps: float,
    delta: float,
    n: int | None = None,
    buckets: int | None = None,
    sensitivity: int = 1,
    gamma: float | None = None,
    factor: float = 1.2,
) -> MechanismParams:
    """Calibrates any supported mechanism.

    Args:
        mechanism: One of ``MECHANISMS``.
        eps: Target privacy-loss level.
        delta: Target failure probability.
        n: Number of users; required by the baselines.
        buckets: Histogram size; None (or 1) selects binary summation.
        sensitivity: Largest per-user input for poisson and nb summation.
        gamma: When given, correlated noise uses the near-central recipe
            instead of the numerical calibration.
        factor: RMSE inflation over central for the numerical correlated calibration.
    """
    if buckets is not None and buckets < 2:
        buckets = None
    _check_privacy(eps, delta)
    if mechanism == "central":
        return MechanismParams("central", eps, delta, None, n=n, buckets=buckets)
    if mechanism == "poisson":
        if buckets is not None:
            lam = calibrate_poisson_histogram(eps, delta)
        else:
            lam = calibrate_poisson(eps, delta, sensitivity)
        return MechanismParams("poisson", eps, delta, lam, n=n, buckets=buckets, sensitivity=sensitivity)
    if mechanism == "nb":
        if buckets is not None:
            raise InvalidParameter("the negative binomial mechanism is implemented for summation only")
        return MechanismParams(
            "nb", eps, delta, nb_params_closed_form(eps, delta, sensitivity), n=n, sensitivity=sensitivity
        )
    if mechanism == "correlated":
        if gamma is not None:
            if buckets is not None:
                return histogram_params(eps, delta, gamma, buckets, n)
            return replace(near_central_params(eps, delta, gamma), n=n)
        if buckets is not None:
            return calibrate_correlated_histogram(eps, delta, buckets, n, factor)
        return replace(calibrate_correlated(eps, delta, None, factor), n=n)
    if mechanism in BASELINE_KINDS:
        if n is None:
            raise InvalidParameter(f"{mechanism} calibration depends on n")
        if mechanism == "binary-rr" and buckets is not None:
            raise InvalidParameter("binary-rr is a summation protocol")
        if mechanism in HISTOGRAM_ONLY and buckets is None:
            raise InvalidParameter(f"{mechanism} is a histogram protocol")
        return baseline_params(mechanism, eps, delta, n, buckets)
    raise InvalidParameter(f"unknown mechanism {mechanism!r}")


def check_noise(params: MechanismParams, tol: float | None = None) -> PrivacyReport:
    """Divergence of the configured noise at the configured epsilon.

    Args:
        params: Mechanism and noise to check.
        tol: Truncation budget; defaults to ``1e-4 * params.delta``.
    """
    m, eps = params.mechanism, params.epsilon
    budget = _budget(params.delta) if tol is None else tol
    if m in ("poisson", "nb"):
        if params.is_histogram:
            return poisson_histogram_divergence(params.noise, eps, budget)
        return delta_summation_divergence(params.noise_distribution, params.sensitivity, eps, budget)
    if m == "correlated":
        if not params.is_histogram:
            return correlated_divergence(params.noise, eps, budget)
        # each of the two affected buckets is checked at eps/2 and the two compose
        half = correlated_divergence(params.noise, eps / 2, budget / 2)
        return replace(half, epsilon=eps, delta=min(1.0, 2 * half.delta), truncation_error=2 * half.truncation_error)
    if m in BASELINE_KINDS:
        return baseline_delta_lower(m, params.noise, eps, params.n, params.buckets or 2)
    if m == "central":
        return PrivacyReport(eps, 0.0, 0.0, True)
    raise InvalidParameter(f"unknown mechanism {m!r}")
