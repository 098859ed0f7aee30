"""End-to-end simulation: randomize, shuffle, analyze, and score.

Each user's randomizer output is a multiset of messages. The shuffler pools
all of them and applies a uniform random permutation; the analyzer receives
only per-type message totals read off the shuffled pool. Since every analyzer
is a function of those totals, the permutation can be skipped
(``materialize=False``) without changing any estimate; the shuffle draws come
from a separate child generator so both paths consume identical randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .calibrate import MechanismParams
from .dist import DiscreteLaplace, InvalidParameter
from .protocols import (
    BASELINE_PAYLOAD,
    baseline_analyze,
    baseline_randomize,
    correlated_analyze,
    correlated_randomize,
    ddist_analyze,
    ddist_randomize,
    hist_analyze,
    hist_randomize_ddist,
    hist_randomize_efficient,
    message_bits,
    one_hot,
)


@dataclass
class Transcript:
    """The shuffled pool of messages.

    Attributes:
        kind: Payload kind shared by all messages.
        buckets: Bucket count used for bit accounting (1 for summation).
        type_counts: Number of messages of each type. Type codes are
            ``2 * bucket + (sign < 0)`` for signed kinds, the bucket for
            ``bucket`` and ``indexed-bit`` kinds, and the bit for ``bit``.
        total_bits: Sum of per-message bit costs.
        messages: Shuffled message codes (rows for ``bit-vector``), when materialized.
        per_user_counts: Messages sent by each user, for accounting only.
    """

    kind: str
    buckets: int
    type_counts: np.ndarray
    total_bits: int
    messages: np.ndarray | None = None
    per_user_counts: np.ndarray = field(default=None, repr=False)

    @property
    def num_messages(self) -> int:
        return int(self.per_user_counts.sum())

    def analyzer_view(self) -> np.ndarray:
        """Per-type totals, read from the shuffled messages when they exist."""
        if self.messages is None:
            return self.type_counts.copy()
        if self.kind == "bit-vector":
            return self.messages.sum(axis=0)
        return np.bincount(self.messages, minlength=len(self.type_counts))


def shuffle(
    per_user_types: np.ndarray,
    kind: str,
    buckets: int,
    rng: np.random.Generator,
    materialize: bool = True,
) -> Transcript:
    """Pools per-user message multisets and permutes them uniformly.

    Args:
        per_user_types: Array ``(users, types)`` with the number of messages of
            each type per user. For ``bit-vector`` payloads, the users' vectors.
        kind: Payload kind.
        buckets: Bucket count for bit accounting.
        rng: Generator used only for the permutation.
        materialize: When False, skip building the message list.
    """
    per_user_types = np.asarray(per_user_types, dtype=np.int64)
    if kind == "bit-vector":
        per_user = np.ones(per_user_types.shape[0], dtype=np.int64)
        counts = per_user_types.sum(axis=0)
        messages = per_user_types[rng.permutation(per_user_types.shape[0])] if materialize else None
    else:
        per_user = per_user_types.sum(axis=1)
        counts = per_user_types.sum(axis=0)
        messages = None
        if materialize:
            codes = np.repeat(np.arange(per_user_types.shape[1]), counts)
            messages = rng.permutation(codes)
    bits = int(per_user.sum()) * message_bits(kind, buckets)
    return Transcript(kind, buckets, counts, bits, messages, per_user)


@dataclass(frozen=True)
class TrialMetrics:
    """Outcome of one simulated run.

    Attributes:
        estimate: Analyzer output (scalar for summation, vector for histograms).
        truth: The true sum or histogram.
        squared_error: Sum over coordinates of the squared error.
        linf_error: Largest absolute coordinate error.
        messages_sent: Total messages across users.
        bits_sent: Total bits across users.
        extra_messages: Messages per user beyond those carrying the input.
    """

    estimate: np.ndarray | float
    truth: np.ndarray | float
    squared_error: float
    linf_error: float
    messages_sent: int
    bits_sent: int
    extra_messages: float


@dataclass(frozen=True)
class ExperimentResult:
    """Aggregates over independent trials.

    Attributes:
        rmse: Root of the mean over trials of the per-coordinate mean squared error.
        mean_linf: Average largest absolute coordinate error.
        mean_extra_messages: Average messages per user beyond the input-carrying ones.
        mean_bits: Average total bits per trial.
        trials: Number of trials.
        n: Number of users.
        errors: Per-trial error (``estimate - truth``), shape ``(trials,)`` or ``(trials, B)``.
    """

    rmse: float
    mean_linf: float
    mean_extra_messages: float
    mean_bits: float
    trials: int
    n: int
    errors: np.ndarray = field(repr=False, compare=False)

    @property
    def bits_per_user(self) -> float:
        return self.mean_bits / self.n


def _child(rng: np.random.Generator) -> np.random.Generator:
    """Independent generator for the permutation, leaving ``rng``'s stream untouched."""
    return rng.spawn(1)[0]


def _validate_inputs(inputs, params: MechanismParams) -> np.ndarray:
    x = np.asarray(inputs)
    if x.ndim != 1 or x.size == 0:
        raise InvalidParameter("inputs must be a non-empty one-dimensional array")
    if params.n is not None and params.n != x.size:
        raise InvalidParameter(f"expected {params.n} inputs, got {x.size}")
    if x.dtype.kind not in "iub":
        raise InvalidParameter("inputs must be integers")
    x = x.astype(np.int64)
    if params.is_histogram:
        if np.any((x < 1) | (x > params.buckets)):
            raise InvalidParameter(f"bucket indices must lie in [1, {params.buckets}]")
    elif np.any((x < 0) | (x > params.sensitivity)):
        raise InvalidParameter(f"inputs must lie in [0, {params.sensitivity}]")
    return x


def true_value(inputs: np.ndarray, params: MechanismParams):
    if params.is_histogram:
        return np.bincount(inputs - 1, minlength=params.buckets).astype(float)
    return float(inputs.sum())


def simulate(inputs, params: MechanismParams, rng: np.random.Generator, materialize: bool = True):
    """Runs the randomizers and the shuffler.

    Returns:
        ``(transcript, signal_messages)`` where ``signal_messages`` counts the
        messages attributable to the inputs rather than the noise.
        The transcript is None for the central reference.
    """
    x = _validate_inputs(inputs, params)
    n = x.size
    shuffle_rng = _child(rng)
    m = params.mechanism
    b = params.buckets or 1

    if m in ("poisson", "nb"):
        d = params.noise_distribution
        if params.is_histogram:
            counts = hist_randomize_ddist(x, d, n, b, rng)[..., 0]
            per_user = np.stack([counts, np.zeros_like(counts)], axis=-1).reshape(n, -1)
            return shuffle(per_user, "bucket-signed", b, shuffle_rng, materialize), n
        counts = ddist_randomize(x, d.divide(n), rng, params.sensitivity)
        return shuffle(counts[:, None], "unit", 1, shuffle_rng, materialize), int(x.sum())
    if m == "correlated":
        if params.is_histogram:
            counts = hist_randomize_efficient(x, params.noise, n, b, rng)
            return shuffle(counts.reshape(n, -1), "bucket-signed", b, shuffle_rng, materialize), n
        counts = correlated_randomize(x, params.noise.divide(n), rng)
        return shuffle(counts, "signed", 1, shuffle_rng, materialize), int(x.sum())
    if m in BASELINE_PAYLOAD:
        reports = baseline_randomize(m, x, params.noise, b, rng)
        kind = BASELINE_PAYLOAD[m]
        if m == "binary-rr":
            per_user = np.stack([1 - reports, reports], axis=-1)
        elif m == "b-rr":
            per_user = one_hot(reports, b)
        else:
            per_user = reports
        return shuffle(per_user, kind, b, shuffle_rng, materialize), n
    if m == "central":
        return None, 0
    raise InvalidParameter(f"unknown mechanism {m!r}")


def analyze(transcript: Transcript, params: MechanismParams, n: int):
    """Applies the mechanism's analyzer to the transcript's per-type totals."""
    view = transcript.analyzer_view()
    m = params.mechanism
    b = params.buckets or 1
    if m in ("poisson", "nb"):
        mean = params.noise_distribution.mean
        if params.is_histogram:
            return hist_analyze(view.reshape(b, 2), mean)
        return float(ddist_analyze(int(view[0]), mean))
    if m == "correlated":
        if params.is_histogram:
            return hist_analyze(view.reshape(b, 2), params.noise.bias)
        return float(correlated_analyze(int(view[0]), int(view[1]), params.noise.bias))
    if m == "binary-rr":
        return baseline_analyze(m, view[1], n, b, params.noise)
    return baseline_analyze(m, view, n, b, params.noise)


def run_trial(
    inputs, params: MechanismParams, rng: np.random.Generator, materialize: bool = True
) -> TrialMetrics:
    """One randomize-shuffle-analyze round and its error and cost."""
    x = _validate_inputs(inputs, params)
    n = x.size
    truth = true_value(x, params)
    if params.mechanism == "central":
        noise = DiscreteLaplace(params.central_scale)
        if params.is_histogram:
            estimate = truth + noise.sample(rng, params.buckets)
        else:
            estimate = truth + noise.sample(rng)
        messages, bits, extra = 0, 0, 0.0
    else:
        transcript, signal = simulate(x, params, rng, materialize)
        estimate = analyze(transcript, params, n)
        messages, bits = transcript.num_messages, transcript.total_bits
        extra = (messages - signal) / n
    err = np.atleast_1d(np.asarray(estimate, dtype=float) - truth)
    return TrialMetrics(
        estimate=estimate,
        truth=truth,
        squared_error=math.fsum((err * err).tolist()),
        linf_error=float(np.max(np.abs(err))),
        messages_sent=int(messages),
        bits_sent=int(bits),
        extra_messages=float(extra),
    )


def trial_generators(seed, trials: int) -> list[np.random.Generator]:
    """Per-trial generators derived from ``seed``; trial ``t`` is the same for any ``trials``.

    ``seed`` is an integer or a ``numpy.random.SeedSequence``.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    # spawn from a fresh copy so repeated calls with the same sequence agree
    root = np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key, pool_size=root.pool_size)
    return [np.random.default_rng(s) for s in root.spawn(trials)]


def run_experiment(
    inputs, params: MechanismParams, trials: int, seed, materialize: bool = False
) -> ExperimentResult:
    """Repeats :func:`run_trial` with independent per-trial generators and aggregates."""
    if int(trials) != trials or trials < 1:
        raise InvalidParameter(f"trials must be a positive integer, got {trials}")
    x = _validate_inputs(inputs, params)
    b = params.buckets or 1
    sq, linf, extra, bits, errors = [], [], [], [], []
    for rng in trial_generators(seed, int(trials)):
        t = run_trial(x, params, rng, materialize)
        sq.append(t.squared_error)
        linf.append(t.linf_error)
        extra.append(t.extra_messages)
        bits.append(float(t.bits_sent))
        errors.append(np.asarray(t.estimate, dtype=float) - t.truth)
    trials = int(trials)
    return ExperimentResult(
        rmse=math.sqrt(math.fsum(sq) / (trials * b)),
        mean_linf=math.fsum(linf) / trials,
        mean_extra_messages=math.fsum(extra) / trials,
        mean_bits=math.fsum(bits) / trials,
        trials=trials,
        n=x.size,
        errors=np.array(errors),
    )
