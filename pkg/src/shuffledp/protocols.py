"""Local randomizers and analyzers.

Randomizers are vectorized over users: they take an array of user inputs and
return, per user, the number of messages of each type that user sends. A
message is identified by its type alone (bucket and sign), so these counts are
exactly the user's multiset of messages. Analyzers only ever see totals per
message type, which is all the shuffled transcript reveals.

Bucket indices are 1-based in inputs and 0-based as array positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dist import (
    IntegerDistribution,
    InvalidParameter,
    NoiseTriple,
    PointMass,
    poisson_array,
    to_dcp,
)

PAYLOAD_KINDS = ("unit", "signed", "bucket-signed", "bit-vector", "indexed-bit", "bit", "bucket")


def message_bits(kind: str, buckets: int = 1) -> int:
    """Bits needed to encode one message of the given payload kind."""
    log_b = math.ceil(math.log2(buckets)) if buckets > 1 else 0
    costs = {
        "unit": 1,
        "signed": 1,
        "bit": 1,
        "bucket-signed": log_b + 1,
        "indexed-bit": log_b + 1,
        "bucket": log_b,
        "bit-vector": buckets,
    }
    if kind not in costs:
        raise InvalidParameter(f"unknown payload kind {kind!r}")
    return costs[kind]


@dataclass(frozen=True)
class Message:
    """One anonymous message.

    Attributes:
        bucket: 1-based bucket tag, 1 for summation protocols.
        sign: +1 or -1.
        kind: Payload kind, which fixes the bit cost.
    """

    bucket: int = 1
    sign: int = 1
    kind: str = "unit"

    def bits(self, buckets: int = 1) -> int:
        return message_bits(self.kind, buckets)


def _bits(x, high: int = 1) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype.kind == "b":
        x = x.astype(np.int64)
    if x.dtype.kind not in "iu" or np.any((x < 0) | (x > high)):
        raise InvalidParameter(f"inputs must be integers in [0, {high}]")
    return x.astype(np.int64)


def _buckets(i, buckets: int) -> np.ndarray:
    i = np.asarray(i)
    if buckets < 2:
        raise InvalidParameter(f"histograms need at least 2 buckets, got {buckets}")
    if i.dtype.kind not in "iu" or np.any((i < 1) | (i > buckets)):
        raise InvalidParameter(f"bucket indices must be integers in [1, {buckets}]")
    return i.astype(np.int64)


def one_hot(i, buckets: int) -> np.ndarray:
    """Indicator rows ``1[i = j]`` for 1-based bucket indices."""
    i = _buckets(i, buckets)
    return (i[..., None] == np.arange(1, buckets + 1)).astype(np.int64)


# --- summation -----------------------------------------------------------------


def ddist_randomize(x, d_over_n: IntegerDistribution, rng: np.random.Generator, sensitivity: int | None = None):
    """Number of unit messages each user sends: its input plus a noise share.

    Args:
        x: User inputs in ``{0, ..., sensitivity}`` (scalar or array).
        d_over_n: Per-user share of the central noise.
        rng: Random generator.
        sensitivity: Largest allowed input; defaults to the largest input seen.

    Returns:
        Message counts with the shape of ``x``.
    """
    arr = np.asarray(x)
    high = int(arr.max()) if sensitivity is None and arr.size else (sensitivity or 1)
    arr = _bits(arr, max(high, 1))
    if not d_over_n.nonnegative:
        raise InvalidParameter("noise shares must be non-negative to be sent as messages")
    noise = d_over_n.sample(rng, arr.shape) if arr.ndim else d_over_n.sample(rng)
    out = arr + noise
    return int(out) if np.ndim(out) == 0 else out


def ddist_analyze(count, d_mean: float):
    """Unbiased sum estimate from the total number of unit messages."""
    return np.asarray(count) - d_mean if np.ndim(count) else count - d_mean


def correlated_randomize(x, triple_over_n: NoiseTriple, rng: np.random.Generator) -> np.ndarray:
    """Numbers of ``+1`` and ``-1`` messages each user sends.

    A user with bit ``x`` sends ``x + Z1 + Z3`` positive and ``Z2 + Z3`` negative
    messages, with ``Zj`` drawn from the per-user shares.

    Returns:
        Integer array of shape ``x.shape + (2,)`` holding ``(plus, minus)``.
    """
    x = _bits(x)
    shape = x.shape
    z1 = np.asarray(triple_over_n.d1.sample(rng, shape))
    z2 = np.asarray(triple_over_n.d2.sample(rng, shape))
    z3 = np.asarray(triple_over_n.d3.sample(rng, shape))
    return np.stack([x + z1 + z3, z2 + z3], axis=-1).astype(np.int64)


def correlated_analyze(u_plus, u_minus, bias: float):
    """Sum estimate ``U_plus - U_minus - E[d1 - d2]``."""
    return np.asarray(u_plus) - np.asarray(u_minus) - bias if np.ndim(u_plus) else u_plus - u_minus - bias


# --- histograms ------------------------------------------------------------------

Inner = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def ddist_inner(d_over_n: IntegerDistribution) -> Inner:
    """Binary distributed randomizer as a signed-count inner randomizer."""

    def inner(bits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        plus = bits + np.asarray(d_over_n.sample(rng, bits.shape))
        return np.stack([plus, np.zeros_like(plus)], axis=-1)

    return inner


def correlated_inner(triple_over_n: NoiseTriple) -> Inner:
    """Binary correlated randomizer as a signed-count inner randomizer."""
    return lambda bits, rng: correlated_randomize(bits, triple_over_n, rng)


def hist_randomize(i, inner: Inner, buckets: int, rng: np.random.Generator) -> np.ndarray:
    """Runs a binary randomizer on every bucket indicator and tags the outputs.

    Takes ``Theta(B)`` time per user; :func:`hist_randomize_efficient` is the
    output-proportional equivalent.

    Returns:
        Counts of shape ``i.shape + (buckets, 2)``: per bucket, ``(plus, minus)``.
    """
    return inner(one_hot(i, buckets), rng)


def parallel_sampling(
    d: IntegerDistribution, n: int, buckets: int, rng: np.random.Generator, size=None
) -> np.ndarray:
    """Independent per-bucket shares of ``d / n`` in time proportional to their sum.

    Draws ``N ~ Poisson(B rate / n)`` atoms of the compound Poisson form of ``d``
    and drops each into a uniform bucket; by Poissonization the bucket totals
    are i.i.d. with law ``d / n``.

    Returns:
        Occurrence counts of shape ``(buckets,)``, or ``size + (buckets,)``.
    """
    shape = (buckets,) if size is None else tuple(np.atleast_1d(size)) + (buckets,)
    if isinstance(d, PointMass) and d.k == 0:
        return np.zeros(shape, dtype=np.int64)
    dcp = to_dcp(d)
    reps = 1 if size is None else int(np.prod(size))
    n_atoms = poisson_array(buckets * dcp.rate / n, reps, rng)
    total = int(n_atoms.sum())
    owner = np.repeat(np.arange(reps), n_atoms)
    tags = rng.integers(0, buckets, size=total)
    atoms = np.asarray(dcp.atom.sample(rng, total), dtype=np.int64)
    flat = np.bincount(owner * buckets + tags, weights=atoms, minlength=reps * buckets)
    return np.rint(flat).astype(np.int64).reshape(shape)


def hist_randomize_efficient(
    i, triple: NoiseTriple, n: int, buckets: int, rng: np.random.Generator
) -> np.ndarray:
    """Correlated histogram randomizer built from three parallel samplings.

    The user's own ``(i, +1)`` message is always present; the three samplings
    add ``+1`` messages, ``-1`` messages and matched ``(+1, -1)`` pairs.

    Returns:
        Counts of shape ``i.shape + (buckets, 2)``.
    """
    own = one_hot(i, buckets)
    shape = own.shape[:-1]
    size = shape if shape else None
    y1 = parallel_sampling(triple.d1, n, buckets, rng, size)
    y2 = parallel_sampling(triple.d2, n, buckets, rng, size)
    y3 = parallel_sampling(triple.d3, n, buckets, rng, size)
    return np.stack([own + y1 + y3, y2 + y3], axis=-1)


def hist_randomize_ddist(i, d: IntegerDistribution, n: int, buckets: int, rng: np.random.Generator) -> np.ndarray:
    """Distributed-noise histogram randomizer via parallel sampling."""
    own = one_hot(i, buckets)
    shape = own.shape[:-1]
    y = parallel_sampling(d, n, buckets, rng, shape if shape else None)
    plus = own + y
    return np.stack([plus, np.zeros_like(plus)], axis=-1)


def hist_analyze(counts: np.ndarray, bias: float) -> np.ndarray:
    """Per-bucket estimates from total ``(plus, minus)`` counts of shape ``(..., B, 2)``."""
    counts = np.asarray(counts)
    return counts[..., 0] - counts[..., 1] - bias


# --- baselines ---------------------------------------------------------------------

BASELINE_PAYLOAD = {"binary-rr": "bit", "b-rr": "bucket", "rappor": "bit-vector", "frag-rappor": "indexed-bit"}


def _check_flip(kind: str, p: float) -> None:
    top = 1.0 if kind == "b-rr" else 0.5
    if not 0 <= p <= top:
        raise InvalidParameter(f"{kind} probability must lie in [0, {top}], got {p}")


def baseline_randomize(kind: str, x, p_flip: float, buckets: int, rng: np.random.Generator) -> np.ndarray:
    """Local reports of a single-message (or bit-vector) baseline.

    Returns:
        ``binary-rr``: reported bits, shape of ``x``.
        ``b-rr``: reported 1-based buckets, shape of ``x``.
        ``rappor`` and ``frag-rappor``: noisy indicator vectors, shape
        ``x.shape + (buckets,)``. Fragmented RAPPOR sends one indexed message
        per 1-entry.
    """
    _check_flip(kind, p_flip)
    if kind == "binary-rr":
        x = _bits(x)
        return x ^ (rng.random(x.shape) < p_flip)
    if kind == "b-rr":
        x = _buckets(x, buckets)
        resample = rng.random(x.shape) < p_flip
        uniform = rng.integers(1, buckets + 1, size=x.shape)
        return np.where(resample, uniform, x)
    if kind in ("rappor", "frag-rappor"):
        bits = one_hot(x, buckets)
        return bits ^ (rng.random(bits.shape) < p_flip)
    raise InvalidParameter(f"unknown baseline kind {kind!r}")


def baseline_counts(kind: str, reports: np.ndarray, buckets: int) -> np.ndarray:
    """Per-type totals of baseline reports (the shuffled transcript's content)."""
    if kind == "binary-rr":
        return np.asarray(reports.sum())
    if kind == "b-rr":
        return np.bincount(reports.reshape(-1) - 1, minlength=buckets)
    return reports.reshape(-1, buckets).sum(axis=0)


def baseline_analyze(kind: str, counts, n: int, buckets: int, p_flip: float):
    """Unbiased estimates from the per-type totals of a baseline transcript."""
    _check_flip(kind, p_flip)
    counts = np.asarray(counts, dtype=float)
    p = p_flip
    if kind != "b-rr" and p == 0.5:
        raise InvalidParameter(f"{kind} with p = 1/2 carries no signal")
    if kind == "binary-rr":
        return float((counts - n * p) / (1 - 2 * p))
    if kind == "b-rr":
        if p == 1:
            raise InvalidParameter("b-rr with p = 1 carries no signal")
        return (counts - n * p / buckets) / (1 - p)
    if kind in ("rappor", "frag-rappor"):
        return (counts - n * p) / (1 - 2 * p)
    raise InvalidParameter(f"unknown baseline kind {kind!r}")
