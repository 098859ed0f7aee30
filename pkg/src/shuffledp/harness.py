"""Experiment harness: datasets, sweeps over privacy parameters, table output.

A sweep calibrates every mechanism at every ``(epsilon, delta)`` grid point,
simulates it on one dataset and emits one row of metrics per point. Tables are
written as CSV (fixed column order, floats in round-trip ``repr`` form) or as a
JSON array of row objects.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .calibrate import MECHANISMS, OPTIMISTIC, CalibrationError, MechanismParams, calibrate
from .dist import InvalidParameter, TruncationBudgetExceeded
from .shuffler import run_experiment


class DatasetError(ValueError):
    """A dataset file could not be parsed or holds out-of-range values."""


@dataclass(frozen=True)
class Bucketization:
    """Equal-width bucketing of raw non-negative values.

    With ``overflow`` set, ``[low, high)`` is split into ``buckets - 1`` equal
    buckets and values of at least ``high`` go to the last bucket. Without it,
    ``[low, high)`` is split into ``buckets`` buckets and values outside are errors.
    """

    buckets: int
    low: float = 0.0
    high: float = 100_000.0
    overflow: bool = True

    def __post_init__(self):
        if self.buckets < 2:
            raise InvalidParameter(f"bucketization needs at least 2 buckets, got {self.buckets}")
        if not self.high > self.low:
            raise InvalidParameter("bucketization range must be non-empty")

    def assign(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        inner = self.buckets - 1 if self.overflow else self.buckets
        width = (self.high - self.low) / inner
        idx = np.floor((values - self.low) / width).astype(np.int64) + 1
        if self.overflow:
            idx = np.where(values >= self.high, self.buckets, np.minimum(idx, inner))
        bad = (values < self.low) | (idx < 1) | (idx > self.buckets)
        if np.any(bad):
            raise DatasetError(f"value {values[np.argmax(bad)]!r} falls outside the bucketization range")
        return idx

    @classmethod
    def from_dict(cls, spec: dict) -> "Bucketization":
        low, high = spec.get("range", (0.0, 100_000.0))
        return cls(int(spec["buckets"]), float(low), float(high), bool(spec.get("overflow", True)))


def load_dataset(path, bucketization: Bucketization | None = None, buckets: int | None = None) -> np.ndarray:
    """Reads one non-negative integer per line.

    Args:
        path: CSV file path.
        bucketization: When given, raw values are mapped to buckets.
        buckets: Without a bucketization, values must already be bucket
            indices in ``[1, buckets]``; with neither, values must be bits.

    Raises:
        DatasetError: on unparsable lines (reported with their line number)
            or out-of-range values.
    """
    values = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                v = int(text)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: expected a non-negative integer, got {text!r}") from None
            if v < 0:
                raise DatasetError(f"{path}:{lineno}: negative value {v}")
            values.append(v)
    if not values:
        raise DatasetError(f"{path}: no data")
    arr = np.asarray(values, dtype=np.int64)
    if bucketization is not None:
        return bucketization.assign(arr)
    high = buckets if buckets and buckets >= 2 else 1
    low = 1 if high > 1 else 0
    bad = (arr < low) | (arr > high)
    if np.any(bad):
        lineno = int(np.argmax(bad))
        raise DatasetError(f"{path}: value {arr[lineno]} out of range [{low}, {high}] (entry {lineno + 1})")
    return arr


_SYNTH = re.compile(r"^\s*(uniform|zipf|point-mass)\s*(?:[(:]\s*([-+0-9.eE]+)\s*\)?)?\s*$")


def synth_dataset(spec: str, n: int, buckets: int | None, seed: int) -> np.ndarray:
    """Synthetic inputs: ``uniform``, ``zipf(s)`` or ``point-mass(j)``.

    For histograms the result holds bucket indices in ``[1, buckets]``, with
    ``zipf(s)`` putting mass proportional to ``j^-s`` on bucket ``j``. For binary
    summation (``buckets`` None or 1) the result holds bits; ``point-mass(j)``
    then means the bit ``j`` and ``zipf`` draws over two buckets.
    """
    match = _SYNTH.match(spec)
    if not match:
        raise InvalidParameter(f"unrecognized synthetic dataset spec {spec!r}")
    name, arg = match.group(1), match.group(2)
    if int(n) != n or n < 1:
        raise InvalidParameter(f"n must be a positive integer, got {n}")
    binary = buckets is None or buckets < 2
    rng = np.random.default_rng(seed)
    if name == "point-mass":
        if arg is None:
            raise InvalidParameter("point-mass needs a location, e.g. point-mass(1)")
        j = int(float(arg))
        low, high = (0, 1) if binary else (1, buckets)
        if not low <= j <= high:
            raise InvalidParameter(f"point-mass location must lie in [{low}, {high}], got {j}")
        return np.full(int(n), j, dtype=np.int64)
    size = 2 if binary else int(buckets)
    if name == "uniform":
        draws = rng.integers(1, size + 1, size=int(n))
    else:
        s = 1.0 if arg is None else float(arg)
        weights = np.arange(1, size + 1, dtype=float) ** -s
        draws = rng.choice(np.arange(1, size + 1), size=int(n), p=weights / weights.sum())
    return (draws - 1 if binary else draws).astype(np.int64)


@dataclass(frozen=True)
class ExperimentConfig:
    """A sweep over mechanisms and privacy parameters.

    Attributes:
        mechanisms: Mechanism names; the central reference is always added.
        epsilons: Epsilon grid.
        deltas: Delta grid.
        n: Number of users. Defaults to the dataset size for file datasets.
        buckets: Histogram size, or None for binary summation.
        trials: Repetitions per grid point.
        seed: Master seed.
        dataset: ``{"synth": spec}`` or ``{"path": file}``.
        bucketization: Optional raw-value bucketing for file datasets.
        output: Output path.
        format: ``csv`` or ``json``.
        gamma: If set, correlated noise uses the near-central recipe.
        factor: RMSE inflation target of the numerical correlated calibration.
    """

    mechanisms: tuple
    epsilons: tuple
    deltas: tuple
    n: int | None = None
    buckets: int | None = None
    trials: int = 100
    seed: int = 0
    dataset: dict = field(default_factory=lambda: {"synth": "uniform"})
    bucketization: dict | None = None
    output: str | None = None
    format: str = "csv"
    gamma: float | None = None
    factor: float = 1.2

    def __post_init__(self):
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        if not self.mechanisms or not self.epsilons or not self.deltas:
            raise InvalidParameter("mechanism, epsilon and delta grids must be non-empty")
        for m in self.mechanisms:
            if m not in MECHANISMS:
                raise InvalidParameter(f"unknown mechanism {m!r}")
        if self.n is not None and self.n < 1:
            raise InvalidParameter("n must be at least 1")
        if self.buckets is not None and self.buckets < 2:
            object.__setattr__(self, "buckets", None)
        if self.trials < 1:
            raise InvalidParameter("trials must be at least 1")
        if self.format not in ("csv", "json"):
            raise InvalidParameter(f"format must be csv or json, got {self.format!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidParameter(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MetricsRow:
    """One table row: a mechanism at one grid point."""

    mechanism: str
    epsilon: float
    delta: float
    n: int
    buckets: int | None
    rmse: float
    mean_linf: float
    mean_extra_messages: float
    bits_per_user: float
    calibration: str
    optimistic: bool


COLUMNS = tuple(f.name for f in fields(MetricsRow))


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PARSERS = {
    "mechanism": str,
    "epsilon": float,
    "delta": float,
    "n": int,
    "buckets": lambda s: int(s) if s else None,
    "rmse": float,
    "mean_linf": float,
    "mean_extra_messages": float,
    "bits_per_user": float,
    "calibration": str,
    "optimistic": lambda s: s == "true",
}


def rows_to_csv(rows: list[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_format(getattr(row, c)) for c in COLUMNS])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[MetricsRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != COLUMNS:
        raise DatasetError(f"unexpected header {header}")
    return [MetricsRow(**{c: _PARSERS[c](v) for c, v in zip(COLUMNS, rec)}) for rec in reader if rec]


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def rows_to_json(rows: list[MetricsRow]) -> str:
    return json.dumps([{k: _json_value(v) for k, v in asdict(r).items()} for r in rows], indent=2) + "\n"


def rows_from_json(text: str) -> list[MetricsRow]:
    out = []
    for obj in json.loads(text):
        obj = {k: (float(v) if isinstance(v, str) and k not in ("mechanism", "calibration") else v) for k, v in obj.items()}
        out.append(MetricsRow(**obj))
    return out


def write_rows(rows: list[MetricsRow], path, fmt: str = "csv") -> None:
    text = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows)
    Path(path).write_text(text)


def _point_seed(seed: int, mechanism: str, eps: float, delta: float) -> np.random.SeedSequence:
    # keyed by the grid values, so evaluation order cannot change a row
    key = zlib.crc32(f"{mechanism}|{eps!r}|{delta!r}".encode())
    return np.random.SeedSequence([int(seed), key])


def _cache_key(mechanism: str, eps: float, delta: float, config: ExperimentConfig, n: int) -> tuple:
    key = (mechanism, eps, delta, 1, config.buckets, config.gamma, config.factor)
    # baseline calibrations depend on n; infinitely divisible noise does not
    return key + (n,) if mechanism in OPTIMISTIC or mechanism == "binary-rr" else key


def prepare_dataset(config: ExperimentConfig, scale: int = 1) -> np.ndarray:
    """Materializes the configured dataset, subsampled by ``scale``."""
    source = config.dataset or {"synth": "uniform"}
    if "path" in source:
        bucketing = Bucketization.from_dict(config.bucketization) if config.bucketization else None
        data = load_dataset(source["path"], bucketing, config.buckets)
        if config.n is not None:
            if config.n > len(data):
                raise InvalidParameter(f"dataset has {len(data)} entries, fewer than n={config.n}")
            data = data[: config.n]
        return data[:: int(scale)] if scale > 1 else data
    if "synth" not in source:
        raise InvalidParameter("dataset must give either 'path' or 'synth'")
    if config.n is None:
        raise InvalidParameter("synthetic datasets need n")
    n = max(1, config.n // int(scale))
    return synth_dataset(source["synth"], n, config.buckets, config.seed)


def run_sweep(config: ExperimentConfig, scale: int = 1) -> list[MetricsRow]:
    """Calibrates and simulates every mechanism at every grid point.

    Calibration failures are recorded in the row's ``calibration`` field with
    NaN metrics and do not stop the sweep. Rows come out in grid order:
    mechanisms as listed (central reference last unless listed), then epsilon,
    then delta.
    """
    if int(scale) != scale or scale < 1:
        raise InvalidParameter(f"scale must be a positive integer, got {scale}")
    data = prepare_dataset(config, int(scale))
    n = len(data)
    mechanisms = list(config.mechanisms)
    if "central" not in mechanisms:
        mechanisms.append("central")
    cache: dict[tuple, MechanismParams | Exception] = {}
    rows = []
    for mech in mechanisms:
        for eps in config.epsilons:
            for delta in config.deltas:
                key = _cache_key(mech, eps, delta, config, n)
                if key not in cache:
                    try:
                        cache[key] = calibrate(
                            mech, eps, delta, n=n, buckets=config.buckets, gamma=config.gamma, factor=config.factor
                        )
                    except (CalibrationError, InvalidParameter, TruncationBudgetExceeded) as exc:
                        cache[key] = exc
                rows.append(_evaluate(cache[key], mech, eps, delta, data, config))
    return rows


def _evaluate(params, mech, eps, delta, data, config) -> MetricsRow:
    n = len(data)
    if isinstance(params, Exception):
        nan = float("nan")
        return MetricsRow(mech, eps, delta, n, config.buckets, nan, nan, nan, nan, f"error: {params}", mech in OPTIMISTIC)
    params = replace(params, n=n)
    rng_seed = _point_seed(config.seed, mech, eps, delta)
    result = run_experiment(data, params, config.trials, rng_seed)
    return MetricsRow(
        mechanism=mech,
        epsilon=eps,
        delta=delta,
        n=n,
        buckets=config.buckets,
        rmse=result.rmse,
        mean_linf=result.mean_linf,
        mean_extra_messages=result.mean_extra_messages,
        bits_per_user=result.bits_per_user,
        calibration=params.record(),
        optimistic=params.optimistic,
    )
