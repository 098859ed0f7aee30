"""Integer-valued distributions used as noise by the shuffled-model mechanisms.

Every distribution is an immutable value object exposing an exact pmf (evaluated
in log space), closed-form moments, a truncated support window with a certified
bound on the omitted mass, n-fold division for the infinitely divisible kinds,
and samplers driven by an explicit ``numpy.random.Generator``.

Negative binomials are sampled through their discrete compound Poisson form
(a Poisson number of logarithmic atoms), so the whole pipeline stays discrete.
"""

from __future__ import annotations

import abc
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, special, stats

# Default bound on the probability mass left outside a computed support window.
TRUNCATION_TOL = 1e-12
# Largest support window any table may allocate.
MAX_SUPPORT = 20_000_000
# Knuth's product method underflows e^{-lam} beyond ~745; chunk well below that.
_KNUTH_CHUNK = 256.0


class InvalidParameter(ValueError):
    """A distribution or mechanism parameter lies outside its valid range."""


class NotDivisible(ValueError):
    """The distribution has no n-fold decomposition."""


class UnsupportedKind(TypeError):
    """The operation is not defined for this kind of distribution."""


class TruncationBudgetExceeded(RuntimeError):
    """The requested truncation error cannot be met within ``MAX_SUPPORT``."""


@dataclass(frozen=True)
class PmfTable:
    """Probabilities of a distribution on the window ``[lo, lo + len(probs))``.

    Attributes:
        lo: Smallest integer in the window.
        probs: Probability of each integer in the window.
        omitted: Upper bound on the mass outside the window.
    """

    lo: int
    probs: np.ndarray
    omitted: float

    @property
    def hi(self) -> int:
        return self.lo + len(self.probs) - 1

    def at(self, k) -> np.ndarray:
        """Looks up probabilities, returning 0 outside the window."""
        k = np.asarray(k, dtype=np.int64)
        idx = k - self.lo
        inside = (idx >= 0) & (idx < len(self.probs))
        out = np.zeros(k.shape, dtype=float)
        out[inside] = self.probs[idx[inside]]
        return out


def _check_window(lo: int, hi: int) -> None:
    if hi - lo + 1 > MAX_SUPPORT:
        raise TruncationBudgetExceeded(
            f"support window [{lo}, {hi}] exceeds the cap of {MAX_SUPPORT} points"
        )


class IntegerDistribution(abc.ABC):
    """A probability law on the integers."""

    #: True when ``pmf`` is exact pointwise rather than read from a truncated table.
    exact_pmf = True
    #: True when all mass lies on the non-negative integers.
    nonnegative = True

    @abc.abstractmethod
    def logpmf(self, k) -> np.ndarray:
        """Natural log of the pmf, ``-inf`` outside the support."""

    @property
    @abc.abstractmethod
    def mean(self) -> float: ...

    @property
    @abc.abstractmethod
    def variance(self) -> float: ...

    @abc.abstractmethod
    def window(self, tol: float = TRUNCATION_TOL) -> tuple[int, int, float]:
        """Returns ``(lo, hi, omitted)`` with the mass outside ``[lo, hi]`` at most ``omitted <= tol``."""

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator, size=None):
        """Draws one integer (``size=None``) or an int64 array of draws."""

    def divide(self, n: int) -> "IntegerDistribution":
        raise NotDivisible(f"{type(self).__name__} has no n-fold decomposition")

    def pmf(self, k):
        k_arr = np.asarray(k)
        out = np.exp(self.logpmf(k_arr))
        return float(out) if out.ndim == 0 else out

    def table(self, tol: float = TRUNCATION_TOL) -> PmfTable:
        lo, hi, omitted = self.window(tol)
        _check_window(lo, hi)
        return PmfTable(lo, np.exp(self.logpmf(np.arange(lo, hi + 1))), omitted)


def _as_int_array(k) -> np.ndarray:
    k = np.asarray(k)
    if k.dtype.kind == "f":
        if np.any(k != np.floor(k)):
            raise InvalidParameter("pmf arguments must be integers")
    return k.astype(np.int64)


def _finish(k: np.ndarray, out: np.ndarray, valid: np.ndarray) -> np.ndarray:
    out = np.where(valid, out, -np.inf)
    return out if k.ndim else out[()]


def _scipy_window(frozen, tol: float, floor: int | None = None) -> tuple[int, int, float]:
    """Quantile window of a scipy discrete law, widened until the tails fit ``tol``."""
    lo = frozen.ppf(tol / 4) if tol > 0 else frozen.support()[0]
    hi = frozen.isf(tol / 4)
    # scipy's quantiles return NaN for levels below its working precision
    sd = math.sqrt(frozen.var())
    lo = int(lo) if math.isfinite(lo) else int(frozen.mean() - 10 * sd)
    hi = int(hi) if math.isfinite(hi) else int(frozen.mean() + 10 * sd) + 1
    if floor is not None:
        lo = max(lo, floor)
    step = max(1, int(math.sqrt(max(frozen.var(), 1.0))))
    for _ in range(64):
        omitted = float(frozen.cdf(lo - 1) + frozen.sf(hi))
        if omitted <= tol:
            return lo, hi, max(omitted, 0.0)
        lo = lo - step if floor is None else max(floor, lo - step)
        hi += step
        step *= 2
        _check_window(lo, hi)
    raise TruncationBudgetExceeded("could not bracket the support window")


# --- samplers ---------------------------------------------------------------


def sample_poisson(lam: float, rng: np.random.Generator) -> int:
    """One Poisson draw by Knuth's product-of-uniforms method.

    Large rates are split into chunks of at most 256 so that ``exp(-lam)``
    never underflows; the draw is the sum of the chunk draws.
    """
    if lam < 0:
        raise InvalidParameter(f"Poisson rate must be non-negative, got {lam}")
    total = 0
    remaining = float(lam)
    while remaining > 0:
        part = min(remaining, _KNUTH_CHUNK)
        remaining -= part
        limit = math.exp(-part)
        prod = rng.random()
        while prod > limit:
            total += 1
            prod *= rng.random()
    return total


def poisson_array(lam: float, size, rng: np.random.Generator) -> np.ndarray:
    """Vectorized Knuth sampler: each entry is an independent Poisson(lam) draw."""
    if lam < 0:
        raise InvalidParameter(f"Poisson rate must be non-negative, got {lam}")
    out = np.zeros(size, dtype=np.int64)
    flat = out.reshape(-1)
    remaining = float(lam)
    while remaining > 0 and flat.size:
        part = min(remaining, _KNUTH_CHUNK)
        remaining -= part
        limit = math.exp(-part)
        prod = rng.random(flat.size)
        active = np.nonzero(prod > limit)[0]
        while active.size:
            flat[active] += 1
            prod[active] *= rng.random(active.size)
            active = active[prod[active] > limit]
    return out


def sample_logarithmic(p: float, rng: np.random.Generator) -> int:
    """One draw from the logarithmic law by sequential inverse transform.

    Uses ``f(1) = -p / ln(1-p)`` and ``f(k) = f(k-1) * p * (k-1) / k``.
    """
    if not 0 < p < 1:
        raise InvalidParameter(f"logarithmic parameter must lie in (0, 1), got {p}")
    u = rng.random()
    k = 1
    f = -p / math.log1p(-p)
    cdf = f
    while cdf <= u:
        k += 1
        f *= p * (k - 1) / k
        if f == 0.0:
            # u sits within rounding of 1; the remaining tail is below 2^-53
            return k
        cdf += f
    return k


@functools.lru_cache(maxsize=64)
def _logarithmic_cdf(p: float) -> np.ndarray:
    # Table long enough that its tail is below double-precision resolution.
    tail_tol = 1e-17
    kmax = max(1, math.ceil(math.log(tail_tol * (1 - p) * -math.log1p(-p)) / math.log(p)))
    kmax = min(kmax, MAX_SUPPORT)
    k = np.arange(1, kmax + 1)
    logf = k * math.log(p) - np.log(k) - math.log(-math.log1p(-p))
    cdf = np.cumsum(np.exp(logf))
    cdf.flags.writeable = False
    return cdf


def logarithmic_array(p: float, size, rng: np.random.Generator) -> np.ndarray:
    """Vectorized inverse-transform sampler for the logarithmic law."""
    if not 0 < p < 1:
        raise InvalidParameter(f"logarithmic parameter must lie in (0, 1), got {p}")
    cdf = _logarithmic_cdf(float(p))
    u = rng.random(size)
    out = np.searchsorted(cdf, u, side="right").astype(np.int64) + 1
    beyond = out > len(cdf)
    if np.any(beyond):
        # Continue the recurrence past the cached table for the rare far-tail draws.
        for idx in np.flatnonzero(beyond.reshape(-1)):
            target = u.reshape(-1)[idx]
            k = len(cdf)
            f = math.exp(k * math.log(p) - math.log(k) - math.log(-math.log1p(-p)))
            acc = cdf[-1]
            while acc <= target and f > 0:
                k += 1
                f *= p * (k - 1) / k
                acc += f
            out.reshape(-1)[idx] = k
    return out


def compound_poisson_array(rate: float, atom: "IntegerDistribution", size, rng) -> np.ndarray:
    """Sums of a Poisson(rate) number of i.i.d. atoms, one per output entry."""
    counts = poisson_array(rate, size, rng)
    flat = counts.reshape(-1)
    total = int(flat.sum())
    if total == 0:
        return np.zeros_like(counts)
    atoms = np.asarray(atom.sample(rng, total), dtype=np.int64)
    owner = np.repeat(np.arange(flat.size), flat)
    sums = np.bincount(owner, weights=atoms, minlength=flat.size)
    return np.rint(sums).astype(np.int64).reshape(counts.shape)


def _draw(values: np.ndarray, size):
    return int(values[0]) if size is None else values


def _size_of(size) -> int | tuple:
    return 1 if size is None else size


# --- kinds -------------------------------------------------------------------


@dataclass(frozen=True)
class PointMass(IntegerDistribution):
    """All mass on the integer ``k``."""

    k: int = 0

    def __post_init__(self):
        if int(self.k) != self.k:
            raise InvalidParameter(f"point mass location must be an integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def nonnegative(self) -> bool:
        return self.k >= 0

    def logpmf(self, k):
        k = _as_int_array(k)
        return _finish(k, np.zeros(k.shape), k == self.k)

    @property
    def mean(self) -> float:
        return float(self.k)

    @property
    def variance(self) -> float:
        return 0.0

    def window(self, tol=TRUNCATION_TOL):
        return self.k, self.k, 0.0

    def divide(self, n: int) -> "PointMass":
        _check_count(n)
        if self.k % n:
            raise NotDivisible(f"point mass at {self.k} is not divisible into {n} integer parts")
        return PointMass(self.k // n)

    def sample(self, rng, size=None):
        return self.k if size is None else np.full(size, self.k, dtype=np.int64)


def _check_count(n) -> None:
    if int(n) != n or n < 1:
        raise InvalidParameter(f"n must be a positive integer, got {n}")


@dataclass(frozen=True)
class Poisson(IntegerDistribution):
    """Poisson law with rate ``lam > 0``. Use :func:`poisson` to allow ``lam = 0``."""

    lam: float

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidParameter(f"Poisson rate must be positive, got {self.lam}")

    def logpmf(self, k):
        k = _as_int_array(k)
        kk = np.maximum(k, 0)
        out = kk * math.log(self.lam) - self.lam - special.gammaln(kk + 1)
        return _finish(k, out, k >= 0)

    @property
    def mean(self) -> float:
        return float(self.lam)

    @property
    def variance(self) -> float:
        return float(self.lam)

    def window(self, tol=TRUNCATION_TOL):
        return _scipy_window(stats.poisson(self.lam), tol, floor=0)

    def divide(self, n: int) -> "Poisson":
        _check_count(n)
        return Poisson(self.lam / n)

    def to_dcp(self) -> "DcpForm":
        return DcpForm(self.lam, PointMass(1))

    def sample(self, rng, size=None):
        if size is None:
            return sample_poisson(self.lam, rng)
        return poisson_array(self.lam, size, rng)


@dataclass(frozen=True)
class NegativeBinomial(IntegerDistribution):
    """``NB(r, p)`` with pmf ``C(k+r-1, k) (1-p)^r p^k`` on ``k >= 0``.

    ``p`` is the per-trial probability of the counted outcome, so the mean is
    ``p r / (1 - p)``. ``r`` may be any positive real.
    """

    r: float
    p: float

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise InvalidParameter(f"NB shape r must be positive, got {self.r}")
        if not 0 < self.p < 1:
            raise InvalidParameter(f"NB parameter p must lie in (0, 1), got {self.p}")

    def logpmf(self, k):
        k = _as_int_array(k)
        kk = np.maximum(k, 0)
        out = (
            special.gammaln(kk + self.r)
            - special.gammaln(self.r)
            - special.gammaln(kk + 1)
            + self.r * math.log1p(-self.p)
            + kk * math.log(self.p)
        )
        return _finish(k, out, k >= 0)

    @property
    def mean(self) -> float:
        return self.p * self.r / (1 - self.p)

    @property
    def variance(self) -> float:
        return self.p * self.r / (1 - self.p) ** 2

    def window(self, tol=TRUNCATION_TOL):
        # scipy counts failures before r successes of probability 1 - p
        return _scipy_window(stats.nbinom(self.r, 1 - self.p), tol, floor=0)

    def divide(self, n: int) -> "NegativeBinomial":
        _check_count(n)
        return NegativeBinomial(self.r / n, self.p)

    def to_dcp(self) -> "DcpForm":
        return DcpForm(-self.r * math.log1p(-self.p), Logarithmic(self.p))

    def sample(self, rng, size=None):
        dcp = self.to_dcp()
        return _draw(compound_poisson_array(dcp.rate, dcp.atom, _size_of(size), rng), size)


@dataclass(frozen=True)
class Logarithmic(IntegerDistribution):
    """Logarithmic law on ``k >= 1`` with pmf ``-p^k / (k ln(1-p))``."""

    p: float

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise InvalidParameter(f"logarithmic parameter must lie in (0, 1), got {self.p}")

    def logpmf(self, k):
        k = _as_int_array(k)
        kk = np.maximum(k, 1)
        out = kk * math.log(self.p) - np.log(kk) - math.log(-math.log1p(-self.p))
        return _finish(k, out, k >= 1)

    @property
    def mean(self) -> float:
        return -self.p / ((1 - self.p) * math.log1p(-self.p))

    @property
    def variance(self) -> float:
        lg = math.log1p(-self.p)
        return -self.p * (self.p + lg) / ((1 - self.p) ** 2 * lg**2)

    def window(self, tol=TRUNCATION_TOL):
        # P(X > K) <= p^(K+1) / ((K+1) (1-p) (-ln(1-p))) <= p^(K+1) / ((1-p) (-ln(1-p)))
        scale = (1 - self.p) * -math.log1p(-self.p)
        kmax = max(1, math.ceil(math.log(tol * scale) / math.log(self.p)) - 1)
        omitted = self.p ** (kmax + 1) / ((kmax + 1) * scale)
        return 1, kmax, omitted

    def sample(self, rng, size=None):
        if size is None:
            return sample_logarithmic(self.p, rng)
        return logarithmic_array(self.p, size, rng)


@dataclass(frozen=True)
class DiscreteLaplace(IntegerDistribution):
    """Two-sided geometric law with pmf proportional to ``exp(-s |k|)``."""

    s: float

    nonnegative = False

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise InvalidParameter(f"discrete Laplace scale must be positive, got {self.s}")

    def logpmf(self, k):
        k = _as_int_array(k)
        # normalizer (1 - e^-s) / (1 + e^-s) = tanh(s / 2)
        return -self.s * np.abs(k) + math.log(math.tanh(self.s / 2))

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def variance(self) -> float:
        q = math.exp(-self.s)
        return 2 * q / (1 - q) ** 2

    def window(self, tol=TRUNCATION_TOL):
        # P(|X| > m) = 2 e^{-s(m+1)} / (1 + e^{-s})
        q = math.exp(-self.s)
        m = max(0, math.ceil(-math.log(tol * (1 + q) / 2) / self.s) - 1)
        return -m, m, 2 * q ** (m + 1) / (1 + q)

    def as_difference(self) -> "Difference":
        g = NegativeBinomial(1.0, math.exp(-self.s))
        return Difference(g, g)

    def divide(self, n: int) -> "Difference":
        _check_count(n)
        q = math.exp(-self.s)
        share = NegativeBinomial(1.0 / n, q)
        return Difference(share, share)

    def sample(self, rng, size=None):
        return self.as_difference().sample(rng, size)


@dataclass(frozen=True)
class Binomial(IntegerDistribution):
    """Binomial law with ``n`` trials of success probability ``q``."""

    n: int
    q: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise InvalidParameter(f"binomial count must be a non-negative integer, got {self.n}")
        if not 0 <= self.q <= 1:
            raise InvalidParameter(f"binomial probability must lie in [0, 1], got {self.q}")
        object.__setattr__(self, "n", int(self.n))

    def logpmf(self, k):
        k = _as_int_array(k)
        with np.errstate(divide="ignore"):
            out = stats.binom.logpmf(k, self.n, self.q)
        return out if k.ndim else out[()]

    @property
    def mean(self) -> float:
        return self.n * self.q

    @property
    def variance(self) -> float:
        return self.n * self.q * (1 - self.q)

    def window(self, tol=TRUNCATION_TOL):
        return 0, self.n, 0.0

    def sample(self, rng, size=None):
        out = rng.binomial(self.n, self.q, size=size)
        return int(out) if size is None else out.astype(np.int64)


def Bernoulli(q: float) -> Binomial:
    """Bernoulli law as a one-trial binomial."""
    return Binomial(1, q)


@dataclass(frozen=True)
class Difference(IntegerDistribution):
    """Law of ``A - B`` for independent ``A ~ a`` and ``B ~ b``.

    The pmf is read from a truncated cross-correlation table, so pointwise values
    carry the table's truncation error.
    """

    a: IntegerDistribution
    b: IntegerDistribution

    exact_pmf = False
    nonnegative = False

    def logpmf(self, k):
        k = _as_int_array(k)
        with np.errstate(divide="ignore"):
            out = np.log(_difference_table(self, TRUNCATION_TOL).at(k))
        return out if k.ndim else out[()]

    def table(self, tol=TRUNCATION_TOL) -> PmfTable:
        return _difference_table(self, float(tol))

    @property
    def mean(self) -> float:
        return self.a.mean - self.b.mean

    @property
    def variance(self) -> float:
        return self.a.variance + self.b.variance

    def window(self, tol=TRUNCATION_TOL):
        t = _difference_table(self, float(tol))
        return t.lo, t.hi, t.omitted

    def divide(self, n: int) -> "Difference":
        return Difference(self.a.divide(n), self.b.divide(n))

    def sample(self, rng, size=None):
        x = self.a.sample(rng, _size_of(size))
        y = self.b.sample(rng, _size_of(size))
        return _draw(np.asarray(x) - np.asarray(y), size)


@functools.lru_cache(maxsize=128)
def _difference_table(d: Difference, tol: float) -> PmfTable:
    ta = d.a.table(tol / 2)
    tb = d.b.table(tol / 2)
    _check_window(ta.lo - tb.hi, ta.hi - tb.lo)
    if len(ta.probs) * len(tb.probs) <= 4_000_000:
        probs = np.convolve(ta.probs, tb.probs[::-1])
    else:
        probs = np.clip(signal.fftconvolve(ta.probs, tb.probs[::-1]), 0.0, None)
    probs.flags.writeable = False
    return PmfTable(ta.lo - tb.hi, probs, ta.omitted + tb.omitted)


@dataclass(frozen=True)
class Shifted(IntegerDistribution):
    """Law of ``k + X`` for ``X ~ base``."""

    k: int
    base: IntegerDistribution

    def __post_init__(self):
        if int(self.k) != self.k:
            raise InvalidParameter(f"shift must be an integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def exact_pmf(self) -> bool:
        return self.base.exact_pmf

    @property
    def nonnegative(self) -> bool:
        return self.base.nonnegative and self.k >= 0

    def logpmf(self, k):
        return self.base.logpmf(_as_int_array(k) - self.k)

    def table(self, tol=TRUNCATION_TOL) -> PmfTable:
        t = self.base.table(tol)
        return PmfTable(t.lo + self.k, t.probs, t.omitted)

    @property
    def mean(self) -> float:
        return self.base.mean + self.k

    @property
    def variance(self) -> float:
        return self.base.variance

    def window(self, tol=TRUNCATION_TOL):
        lo, hi, om = self.base.window(tol)
        return lo + self.k, hi + self.k, om

    def sample(self, rng, size=None):
        x = self.base.sample(rng, size)
        return x + self.k


@dataclass(frozen=True)
class DcpForm:
    """Discrete compound Poisson law: a Poisson(rate) number of i.i.d. atoms summed.

    Attributes:
        rate: Poisson rate of the number of atoms.
        atom: Law of each atom, supported on the positive integers.
    """

    rate: float
    atom: IntegerDistribution

    @property
    def mean(self) -> float:
        return self.rate * self.atom.mean

    @property
    def variance(self) -> float:
        return self.rate * (self.atom.variance + self.atom.mean**2)

    def sample(self, rng, size=None):
        return _draw(compound_poisson_array(self.rate, self.atom, _size_of(size), rng), size)


@dataclass(frozen=True)
class NoiseTriple:
    """Noise laws ``(d1, d2, d3)`` of the correlated mechanism.

    Each user adds ``d1/n + d3/n`` extra ``+1`` messages and ``d2/n + d3/n`` ``-1``
    messages; ``d3`` cancels in the analyzer and only masks the ``-1`` count.
    """

    d1: IntegerDistribution
    d2: IntegerDistribution
    d3: IntegerDistribution

    def __post_init__(self):
        for d in (self.d1, self.d2, self.d3):
            if not d.nonnegative:
                raise InvalidParameter("correlated noise components must be non-negative")

    def divide(self, n: int) -> "NoiseTriple":
        return NoiseTriple(divide(self.d1, n), divide(self.d2, n), divide(self.d3, n))

    @property
    def bias(self) -> float:
        """Expected value of ``d1 - d2``, subtracted by the analyzer."""
        return self.d1.mean - self.d2.mean

    @property
    def error_variance(self) -> float:
        return self.d1.variance + self.d2.variance

    @property
    def expected_noise_messages(self) -> float:
        """Expected number of noise messages summed over all users."""
        return self.d1.mean + self.d2.mean + 2 * self.d3.mean


# --- constructors and module-level operations --------------------------------


def poisson(lam: float) -> IntegerDistribution:
    """Poisson law, degenerating to ``PointMass(0)`` at ``lam = 0``."""
    if lam == 0:
        return PointMass(0)
    return Poisson(lam)


def negative_binomial(r: float, p: float) -> IntegerDistribution:
    """Negative binomial law, degenerating to ``PointMass(0)`` at ``p = 0``."""
    if p == 0 and r > 0:
        return PointMass(0)
    return NegativeBinomial(r, p)


def geometric(p: float) -> NegativeBinomial:
    """Geometric law on ``k >= 0`` with pmf ``(1-p) p^k``."""
    return NegativeBinomial(1.0, p)


def pmf(d: IntegerDistribution, k):
    return d.pmf(k)


def moments(d: IntegerDistribution) -> tuple[float, float]:
    """Returns ``(mean, variance)``."""
    return d.mean, d.variance


def divide(d: IntegerDistribution, n: int) -> IntegerDistribution:
    """Per-user share whose ``n``-fold convolution is ``d``."""
    return d.divide(n)


def to_dcp(d: IntegerDistribution) -> DcpForm:
    if isinstance(d, (Poisson, NegativeBinomial)):
        return d.to_dcp()
    raise UnsupportedKind(f"{type(d).__name__} has no compound Poisson form here")


def sample(d: IntegerDistribution, rng: np.random.Generator, size=None):
    return d.sample(rng, size)


def convolve_power(t: PmfTable, n: int) -> PmfTable:
    """Table of the ``n``-fold self-convolution, by repeated squaring."""
    result = PmfTable(0, np.ones(1), 0.0)
    base = t
    while n:
        if n & 1:
            result = PmfTable(
                result.lo + base.lo,
                np.convolve(result.probs, base.probs),
                result.omitted + base.omitted,
            )
        n >>= 1
        if n:
            base = PmfTable(2 * base.lo, np.convolve(base.probs, base.probs), 2 * base.omitted)
    return result
