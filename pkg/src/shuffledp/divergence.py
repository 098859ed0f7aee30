"""Hockey-stick divergence computations for the shuffled-model mechanisms.

The hockey-stick divergence ``d_eps(P || Q) = sum_x [P(x) - e^eps Q(x)]_+`` is the
smallest ``delta`` for which ``P`` and ``Q`` are ``(eps, delta)``-indistinguishable.
Our own mechanisms are checked exactly (up to a reported truncation bound); the
baseline protocols get certified lower bounds, which make them look better than
they are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, stats

from .dist import (
    MAX_SUPPORT,
    TRUNCATION_TOL,
    IntegerDistribution,
    InvalidParameter,
    NegativeBinomial,
    NoiseTriple,
    PointMass,
    Poisson,
    TruncationBudgetExceeded,
)

BASELINE_KINDS = ("binary-rr", "b-rr", "rappor", "frag-rappor")


@dataclass(frozen=True)
class PrivacyReport:
    """Achieved divergence at a given epsilon.

    Attributes:
        epsilon: The privacy-loss level the divergence was evaluated at.
        delta: Computed divergence. For exact checks the true value lies in
            ``[delta, delta + truncation_error]``; otherwise it is a lower bound.
        truncation_error: Upper bound on the contribution of omitted support.
        exact: False when ``delta`` is only a lower bound on the true value.
    """

    epsilon: float
    delta: float
    truncation_error: float = 0.0
    exact: bool = True

    @property
    def upper(self) -> float:
        return min(1.0, self.delta + self.truncation_error)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "truncation_error": self.truncation_error,
            "exact": self.exact,
        }


@dataclass(frozen=True)
class TriAtomVariable:
    """A real random variable taking three values.

    Attributes:
        values: The three atoms.
        probs: Their probabilities, summing to one.
    """

    values: tuple[float, float, float]
    probs: tuple[float, float, float]

    def __post_init__(self):
        if len(self.values) != 3 or len(self.probs) != 3:
            raise InvalidParameter("a three-atom variable needs three values and three probabilities")
        if min(self.probs) < 0 or abs(math.fsum(self.probs) - 1) > 1e-12:
            raise InvalidParameter(f"probabilities must be non-negative and sum to 1, got {self.probs}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))


def _check_eps(eps: float) -> float:
    if not eps >= 0:
        raise InvalidParameter(f"epsilon must be non-negative, got {eps}")
    return float(eps)


def _report(eps, delta, trunc, exact=True) -> PrivacyReport:
    return PrivacyReport(float(eps), float(min(max(delta, 0.0), 1.0)), float(max(trunc, 0.0)), exact)


def _positive_sum(terms: np.ndarray) -> float:
    """Compensated sum of the positive entries."""
    pos = terms[terms > 0]
    return math.fsum(pos.tolist()) if pos.size else 0.0


def hockey_stick(p: np.ndarray, q: np.ndarray, eps: float) -> float:
    """``sum [p - e^eps q]_+`` for two aligned probability vectors."""
    return _positive_sum(np.asarray(p, float) - math.exp(eps) * np.asarray(q, float))


# --- summation mechanisms ----------------------------------------------------


def shift_divergence(
    d: IntegerDistribution, k: int, eps: float, tol: float = TRUNCATION_TOL
) -> PrivacyReport:
    """Divergence ``d_eps(D || k + D)`` between the noise and its shift by ``k``.

    Args:
        d: Noise distribution.
        k: Integer shift.
        eps: Privacy-loss level.
        tol: Bound on the mass of ``D`` left out of the summation window.
    """
    eps = _check_eps(eps)
    k = int(k)
    if k == 0:
        return _report(eps, 0.0, 0.0)
    t = d.table(tol)
    x = np.arange(t.lo, t.hi + 1)
    if d.exact_pmf:
        q = d.pmf(x - k)
        trunc = t.omitted
    else:
        q = t.at(x - k)
        # both sides read from the table: the shifted side may be understated too
        trunc = t.omitted * (1 + math.exp(eps))
    return _report(eps, hockey_stick(t.probs, q, eps), trunc)


def delta_summation_divergence(
    d: IntegerDistribution, sensitivity: int, eps: float, tol: float = TRUNCATION_TOL
) -> PrivacyReport:
    """Worst shift divergence over shifts in ``[-sensitivity, sensitivity]``.

    This is the exact privacy of the distributed mechanism for summing inputs
    in ``{0, ..., sensitivity}``.
    """
    if int(sensitivity) != sensitivity or sensitivity < 1:
        raise InvalidParameter(f"sensitivity must be a positive integer, got {sensitivity}")
    eps = _check_eps(eps)
    reports = [
        shift_divergence(d, k, eps, tol)
        for k in range(-int(sensitivity), int(sensitivity) + 1)
        if k
    ]
    worst = max(reports, key=lambda r: r.delta)
    return _report(eps, worst.delta, max(r.truncation_error for r in reports))


# --- correlated mechanism ----------------------------------------------------


def _geometric_ratio(d: IntegerDistribution) -> float | None:
    """``q`` when ``d`` is ``NB(1, q)``, else None."""
    if isinstance(d, NegativeBinomial) and d.r == 1.0:
        return d.p
    return None


def _nonneg_probs(d: IntegerDistribution, tol: float) -> tuple[np.ndarray, float]:
    """Probabilities of ``d`` on ``[0, hi]`` and the mass beyond ``hi``."""
    if not d.nonnegative:
        raise InvalidParameter("correlated noise components must be non-negative")
    lo, hi, omitted = d.window(tol)
    if hi + 1 > MAX_SUPPORT:
        raise TruncationBudgetExceeded(f"support [0, {hi}] exceeds the cap of {MAX_SUPPORT}")
    return np.atleast_1d(d.pmf(np.arange(0, hi + 1))), omitted


def correlated_divergence(
    noise: NoiseTriple, eps: float, tol: float = 1e-14
) -> PrivacyReport:
    """Exact divergence of the correlated mechanism's view for neighboring inputs.

    The analyzer sees ``(U_plus, U_minus) = (x + Z1 + Z3, Z2 + Z3)``. Neighboring
    datasets change ``x`` by one, so the divergence is between the joint law of
    ``(Z1 - Z2, Z2 + Z3)`` and its shift by one in the first coordinate. Both
    shift directions are evaluated and the worse one is reported.

    When ``d1 = d2 = NB(1, q)`` the joint law factorizes as
    ``P(a, b) = (1-q)^2 q^|a| H(b - max(0, -a))`` with
    ``H(m) = sum_c q^(2c) d3(m - c)``, which collapses the two-dimensional sum
    to a one-dimensional one. Other triples use a direct grid summation.

    Args:
        noise: The noise triple.
        eps: Privacy-loss level.
        tol: Tail mass of ``d3`` (and of ``d1, d2`` on the general path) left
            outside the summation window.

    Raises:
        TruncationBudgetExceeded: if the window needed to reach ``tol`` exceeds
            the support cap.
    """
    eps = _check_eps(eps)
    q1, q2 = _geometric_ratio(noise.d1), _geometric_ratio(noise.d2)
    if q1 is not None and q1 == q2:
        return _correlated_geometric(q1, noise.d3, eps, tol)
    return _correlated_grid(noise, eps, tol)


def _correlated_geometric(q: float, d3: IntegerDistribution, eps: float, tol: float) -> PrivacyReport:
    g3, _ = _nonneg_probs(d3, tol)
    q2 = q * q
    # H keeps a geometric tail q^(2m) past the support of d3; extend until it is negligible
    pad = max(1, math.ceil(math.log(tol * (1 - q2)) / math.log(q2)))
    if len(g3) + pad > MAX_SUPPORT:
        raise TruncationBudgetExceeded(f"support of length {len(g3) + pad} exceeds the cap")
    g3 = np.concatenate((g3, np.zeros(pad)))
    h = signal.lfilter([1.0], [1.0, -q2], g3)
    h_prev = np.concatenate(([0.0], h[:-1]))
    e = math.exp(eps)
    total_h = 1.0 / (1.0 - q2)
    rest = max(total_h - math.fsum(h.tolist()), 0.0)

    # sum moves +1: only a <= 0 contributes
    up = (1 - q) * _positive_sum(h - e * q * h_prev)
    # sum moves -1: a >= 1 contributes in closed form, a <= 0 through H
    down = (1 - q) * (
        max(1 - e * q, 0.0) * total_h + _positive_sum(q * h_prev - e * h)
    )
    # omitted terms are bounded by the H mass beyond the window
    trunc = (1 - q) * (rest + q * (rest + h[-1]))
    return _report(eps, max(up, down), trunc)


def _correlated_grid(noise: NoiseTriple, eps: float, tol: float) -> PrivacyReport:
    g1, o1 = _nonneg_probs(noise.d1, tol / 3)
    g2, o2 = _nonneg_probs(noise.d2, tol / 3)
    g3, o3 = _nonneg_probs(noise.d3, tol / 3)
    h1, h2, h3 = len(g1) - 1, len(g2) - 1, len(g3) - 1
    rows, cols = h1 + h2 + 1, h2 + h3 + 1
    if rows * cols > 50_000_000:
        raise TruncationBudgetExceeded(f"joint grid {rows}x{cols} is too large")
    joint = joint_grid(g1, g2, g3)
    e = math.exp(eps)
    # pad one row on each side so both shifts stay on the grid
    padded = np.zeros((rows + 2, cols))
    padded[1:-1] = joint
    up = _positive_sum(padded[1:] - e * padded[:-1])
    down = _positive_sum(padded[:-1] - e * padded[1:])
    trunc = (1 + e) * (o1 + o2 + o3)
    return _report(eps, max(up, down), trunc)


def joint_grid(g1: np.ndarray, g2: np.ndarray, g3: np.ndarray) -> np.ndarray:
    """Joint pmf of ``(Z1 - Z2, Z2 + Z3)`` from the marginal pmfs on ``[0, h]``.

    Row ``i`` is ``a = i - (len(g2) - 1)``; column ``b`` is ``Z2 + Z3 = b``.
    """
    h2 = len(g2) - 1
    h3 = len(g3) - 1
    out = np.zeros((len(g1) + h2, h2 + h3 + 1))
    for c, w in enumerate(g2):
        if w == 0:
            continue
        # Z2 = c: rows a = z1 - c, columns b = c + z3
        out[h2 - c : h2 - c + len(g1), c : c + h3 + 1] += w * np.outer(g1, g3)
    return out


# --- histogram Poisson mechanism -------------------------------------------


def poisson_histogram_divergence(lam: float, eps: float, tol: float = TRUNCATION_TOL) -> PrivacyReport:
    """Divergence for the Poisson histogram mechanism.

    Moving one user between two buckets turns ``(Y1, Y2)`` i.i.d. Poisson into
    ``(1 + Y1, -1 + Y2)``. The likelihood ratio of the shifted law is
    ``y1 / (y2 + 1)``, so the divergence is
    ``sum P(y1) P(y2) [1 - e^eps y1 / (y2 + 1)]_+``.
    """
    if not lam > 0:
        raise InvalidParameter(f"Poisson rate must be positive, got {lam}")
    eps = _check_eps(eps)
    t = Poisson(lam).table(tol / 2)
    y = np.arange(t.lo, t.hi + 1, dtype=float)
    e = math.exp(eps)
    parts = []
    chunk = max(1, 4_000_000 // len(y))
    for start in range(0, len(y), chunk):
        y1 = y[start : start + chunk, None]
        ratio = 1.0 - e * y1 / (y[None, :] + 1.0)
        terms = t.probs[start : start + chunk, None] * t.probs[None, :] * ratio
        parts.append(_positive_sum(terms))
    mass = math.fsum(t.probs.tolist())
    return _report(eps, math.fsum(parts), max(1 - mass * mass, 0.0) + 2 * t.omitted)


# --- baseline lower bounds ----------------------------------------------------


def _binomial_window(n: int, p: float, budget: float) -> tuple[int, int]:
    """Window around ``n p`` whose outside mass under ``Bin(n, p)`` is at most ``budget``.

    The radius is ``c sqrt(n ln(n / budget))`` with ``c`` doubled until the
    binomial tails beyond the window fit the budget.
    """
    if n == 0 or p in (0.0, 1.0):
        k = int(round(n * p))
        return k, k
    if budget <= 0:
        return 0, n
    mean = n * p
    c = 0.125
    # log of the ratio, since n / budget overflows for subnormal budgets
    base = math.sqrt(max(n * max(math.log(n) - math.log(budget), 1.0), 1.0))
    while True:
        tau = c * base
        lo = max(0, int(math.floor(mean - tau)))
        hi = min(n, int(math.ceil(mean + tau)))
        if (lo == 0 and hi == n) or stats.binom.cdf(lo - 1, n, p) + stats.binom.sf(hi, n, p) <= budget:
            return lo, hi
        c *= 2


def positive_part_mean(
    u: TriAtomVariable, n: int, prune_tol: float = 0.0, prune: bool = True
) -> float:
    """``(1/n) E[[U_1 + ... + U_n]_+]`` for i.i.d. three-atom ``U_i``.

    With ``A_1 ~ Bin(n, p1)`` and ``A_2 | A_1 ~ Bin(n - A_1, p2 / (p2 + p3))``
    the sum equals ``A_1 d1 + A_2 d2 + (n - A_1 - A_2) d3``. Index windows are
    pruned so that the dropped contribution is below ``prune_tol``; the result is
    therefore a lower bound within ``prune_tol`` of the exact value.

    Args:
        u: Distribution of each summand.
        n: Number of summands.
        prune_tol: Budget for the dropped contribution. Zero disables pruning.
        prune: Set False to force the full ``O(n^2)`` summation.
    """
    if int(n) != n or n < 1:
        raise InvalidParameter(f"n must be a positive integer, got {n}")
    n = int(n)
    d1, d2, d3 = u.values
    p1, p2, p3 = u.probs
    top = max(d1, d2, d3, 0.0)
    if top <= 0:
        return 0.0
    prune = prune and prune_tol > 0
    # each dropped outcome contributes at most n * top / n = top
    budget = prune_tol / (2 * top) if prune else 0.0
    cond = p2 / (p2 + p3) if p2 + p3 > 0 else 0.0

    if prune:
        a1_lo, a1_hi = _binomial_window(n, p1, budget)
    else:
        a1_lo, a1_hi = 0, n
    a1 = np.arange(a1_lo, a1_hi + 1)
    w1 = stats.binom.pmf(a1, n, p1)
    parts = []
    for a, w in zip(a1.tolist(), w1.tolist()):
        if w == 0:
            continue
        m = n - a
        if prune:
            lo, hi = _binomial_window(m, cond, budget)
        else:
            lo, hi = 0, m
        a2 = np.arange(lo, hi + 1)
        s = a * d1 + a2 * d2 + (m - a2) * d3
        pos = s > 0
        if not np.any(pos):
            continue
        w2 = stats.binom.pmf(a2[pos], m, cond)
        parts.extend((w * w2 * s[pos]).tolist())
    return math.fsum(parts) / n


def brr_atoms(p: float, eps: float, buckets: int) -> TriAtomVariable:
    """Three-atom variable for the randomized-response-over-buckets lower bound.

    The neighbors are ``(1, ..., 1, x)`` and ``(1, ..., 1, x')`` with ``x, x'`` two
    buckets other than 1; messages are grouped into ``x``, ``x'`` and the rest.
    With two buckets only ``x = 2`` against ``x' = 1`` exists, and the groups
    are the two buckets.
    """
    b = buckets
    e = math.exp(eps)
    if b == 2:
        # reference input 1: bucket 1 w.p. 1 - p/2, bucket 2 w.p. p/2
        hi, lo = 1 - p / 2, p / 2
        return TriAtomVariable(
            ((1 - p / 2 - e * p / 2) / (p / 2), (p / 2 - e * (1 - p / 2)) / (1 - p / 2), 0.0),
            (lo, hi, 0.0),
        )
    stay = 1 - p + p / b
    return TriAtomVariable(
        ((b / p) * (stay - e * p / b), (b / p) * (p / b - e * stay), p * (b - 2) * (1 - e) / (b - 2 * p)),
        (p / b, p / b, 1 - 2 * p / b),
    )


def rappor_atoms(p: float, eps: float) -> TriAtomVariable:
    """Three-atom variable for the bit-flipping (RAPPOR) lower bound.

    Neighbors as for :func:`brr_atoms`; messages are grouped by whether their
    first, ``x``-th and ``x'``-th bits read ``(1, 1, 0)``, ``(1, 0, 1)`` or otherwise.
    """
    e = math.exp(eps)
    ratio = ((1 - p) / p) ** 2
    w = p * p * (1 - p)
    rest = (1 - e) * (1 - (1 - p) ** 3 - w) / (1 - 2 * w)
    return TriAtomVariable((ratio - e, 1 - e * ratio, rest), (w, w, 1 - 2 * w))


def binary_rr_delta(p: float, eps: float, n: int) -> PrivacyReport:
    """Exact divergence of binary randomized response with flip probability ``p``.

    The analyzer sees the count of 1-messages. Neighbors with ``m`` other ones
    give ``Bin(m, 1-p) + Bin(n-1-m, p) + Ber(p)`` against ``... + Ber(1-p)``; the
    worst case is ``m = 0`` (equivalently ``m = n - 1``), both directions.
    """
    eps = _check_eps(eps)
    base = stats.binom.pmf(np.arange(n), n - 1, p)
    with_zero = np.zeros(n + 1)
    with_one = np.zeros(n + 1)
    with_zero[:-1] += (1 - p) * base
    with_zero[1:] += p * base
    with_one[:-1] += p * base
    with_one[1:] += (1 - p) * base
    delta = max(hockey_stick(with_zero, with_one, eps), hockey_stick(with_one, with_zero, eps))
    return _report(eps, delta, 0.0, exact=True)


def _mixture_pmf(n: int, p: float, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
    """Pmfs of ``Bin(n, p)`` and ``Ber(1-p) + Bin(n-1, p)`` on ``[lo, hi]``."""
    i = np.arange(lo, hi + 1)
    binom = stats.binom.pmf(i, n, p)
    shifted = (1 - p) * stats.binom.pmf(i - 1, n - 1, p) + p * stats.binom.pmf(i, n - 1, p)
    return binom, shifted


def frag_rappor_delta(
    p: float, eps: float, n: int, rel_tol: float = 1e-4, prune: bool = True
) -> PrivacyReport:
    """Lower bound for fragmented RAPPOR via the two-coordinate product sum.

    The bound is ``sum_{i,j} [D(i) B(j) - e^eps B(i) D(j)]_+`` with ``B = Bin(n, p)``
    and ``D = Ber(1-p) + Bin(n-1, p)``: the counts of the two coordinates whose
    bits differ between neighbors. Index windows grow until the omitted mass is
    below ``rel_tol`` times the computed value.
    """
    eps = _check_eps(eps)
    e = math.exp(eps)
    if p == 0:
        return _report(eps, 1.0, 0.0, exact=False)

    def evaluate(lo: int, hi: int) -> tuple[float, float]:
        binom, shifted = _mixture_pmf(n, p, lo, hi)
        parts = []
        chunk = max(1, 4_000_000 // len(binom))
        for s in range(0, len(binom), chunk):
            terms = np.outer(shifted[s : s + chunk], binom) - e * np.outer(binom[s : s + chunk], shifted)
            parts.append(_positive_sum(terms))
        # every term is at most D(i) B(j), so the omitted part is bounded by the
        # mass of either count falling outside the window
        cdf, sf = stats.binom.cdf, stats.binom.sf
        tail_b = cdf(lo - 1, n, p) + sf(hi, n, p)
        tail_d = (1 - p) * (cdf(lo - 2, n - 1, p) + sf(hi - 1, n - 1, p)) + p * (
            cdf(lo - 1, n - 1, p) + sf(hi, n - 1, p)
        )
        return math.fsum(parts), float(tail_b + tail_d)

    if not prune:
        value, _ = evaluate(0, n)
        return _report(eps, value, 0.0, exact=False)
    budget = 1e-3
    while True:
        lo, hi = _binomial_window(n, p, budget)
        lo = max(0, lo - 1)
        value, omitted = evaluate(lo, hi)
        if omitted <= rel_tol * value or (lo == 0 and hi == n) or budget < 1e-300:
            return _report(eps, value, omitted, exact=False)
        budget = rel_tol * value / 4 if value > 0 else budget * 1e-6


def baseline_delta_lower(
    kind: str, p: float, eps: float, n: int, buckets: int = 2, prune_tol: float | None = None
) -> PrivacyReport:
    """Divergence bound for a single-message baseline at flip probability ``p``.

    ``binary-rr`` is evaluated exactly; ``b-rr``, ``rappor`` and ``frag-rappor``
    return lower bounds (``exact=False``), so calibrating against them is
    optimistic for those protocols.

    Args:
        kind: One of ``binary-rr``, ``b-rr``, ``rappor``, ``frag-rappor``.
        p: Flip probability (for ``b-rr``, the probability of reporting a
            uniformly random bucket).
        eps: Privacy-loss level.
        n: Number of users.
        buckets: Number of buckets (ignored by ``binary-rr``).
        prune_tol: Absolute pruning budget for the three-atom sums. Defaults to
            ``1e-4`` times the unpruned-scale estimate obtained from a first pass.
    """
    eps = _check_eps(eps)
    if int(n) != n or n < 1:
        raise InvalidParameter(f"n must be a positive integer, got {n}")
    n = int(n)
    if kind == "b-rr":
        if not 0 < p <= 1:
            raise InvalidParameter(f"b-rr probability must lie in (0, 1], got {p}")
    elif kind in ("binary-rr", "rappor", "frag-rappor"):
        if not 0 <= p <= 0.5:
            raise InvalidParameter(f"{kind} flip probability must lie in [0, 1/2], got {p}")
    else:
        raise InvalidParameter(f"unknown baseline kind {kind!r}")
    if kind != "binary-rr" and buckets < (2 if kind == "b-rr" else 3):
        raise InvalidParameter(f"{kind} needs more buckets, got {buckets}")

    if kind == "binary-rr":
        return binary_rr_delta(p, eps, n)
    if kind == "frag-rappor":
        return frag_rappor_delta(p, eps, n)
    if kind == "rappor" and p == 0:
        return _report(eps, 1.0, 0.0, exact=False)
    u = brr_atoms(p, eps, buckets) if kind == "b-rr" else rappor_atoms(p, eps)
    value = _pruned_relative(u, n, prune_tol)
    return _report(eps, value, 0.0, exact=False)


def _pruned_relative(u: TriAtomVariable, n: int, prune_tol: float | None) -> float:
    if prune_tol is not None:
        return positive_part_mean(u, n, prune_tol)
    # start coarse, then tighten the budget relative to the value found
    tol = 1e-6
    value = positive_part_mean(u, n, tol)
    while value > 0 and tol > 1e-4 * value:
        tol = 1e-4 * value
        value = positive_part_mean(u, n, tol)
    if value == 0:
        value = positive_part_mean(u, n, 1e-300)
    return value
