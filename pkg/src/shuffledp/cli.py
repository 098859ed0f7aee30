"""Command-line entry point: ``shuffledp {calibrate,check,simulate,sweep}``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace

from .calibrate import MECHANISMS, CalibrationError, MechanismParams, calibrate, check_noise
from .dist import InvalidParameter, NoiseTriple, TruncationBudgetExceeded, geometric, negative_binomial
from .harness import (
    Bucketization,
    DatasetError,
    ExperimentConfig,
    MetricsRow,
    load_dataset,
    run_sweep,
    rows_to_csv,
    rows_to_json,
    synth_dataset,
    write_rows,
)
from .shuffler import run_experiment


def _params_record(params: MechanismParams) -> dict:
    report = check_noise(params)
    out = {
        "mechanism": params.mechanism,
        "epsilon": params.epsilon,
        "delta": params.delta,
        "n": params.n,
        "buckets": params.buckets,
        "sensitivity": params.sensitivity,
        "gamma": params.gamma,
        "calibration": params.record(),
        "expected_extra_messages": None,
        "analytic_rmse": params.analytic_rmse(),
        "optimistic": params.optimistic,
        "heuristic": params.heuristic,
        "achieved_delta": report.delta,
        "truncation_error": report.truncation_error,
        "exact": report.exact,
    }
    try:
        out["expected_extra_messages"] = params.expected_extra_messages()
    except InvalidParameter:
        pass
    return out


def _emit_record(record: dict, fmt: str, stream) -> None:
    if fmt == "json":
        json.dump(record, stream, indent=2)
        stream.write("\n")
        return
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(record.keys())
    writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in record.values()])


def cmd_calibrate(args) -> int:
    params = calibrate(
        args.mechanism,
        args.eps,
        args.delta,
        n=args.n,
        buckets=args.buckets,
        sensitivity=args.sensitivity,
        gamma=args.gamma,
    )
    _emit_record(_params_record(params), args.format, sys.stdout)
    return 0


def _noise_from_flags(args):
    m = args.mechanism
    if m == "poisson":
        if args.lam is None:
            raise InvalidParameter("poisson needs --lambda")
        return args.lam
    if m == "nb":
        if args.r is None or args.p is None:
            raise InvalidParameter("nb needs --r and --p")
        return (args.r, args.p)
    if m == "correlated":
        if args.r is None or args.p is None or args.eps1 is None:
            raise InvalidParameter("correlated needs --r, --p and --eps1")
        g = geometric(math.exp(-args.eps1))
        return NoiseTriple(g, g, negative_binomial(args.r, args.p))
    if m in ("binary-rr", "b-rr", "rappor", "frag-rappor"):
        if args.p_flip is None or args.n is None:
            raise InvalidParameter(f"{m} needs --p-flip and --n")
        return args.p_flip
    raise InvalidParameter(f"cannot check mechanism {m!r}")


def cmd_check(args) -> int:
    buckets = args.buckets if args.buckets and args.buckets >= 2 else None
    params = MechanismParams(
        args.mechanism,
        args.eps,
        args.delta if args.delta is not None else 0.5,
        _noise_from_flags(args),
        n=args.n,
        buckets=buckets,
        sensitivity=args.sensitivity,
        eps1=args.eps1,
    )
    tol = 1e-4 * args.delta if args.delta is not None else 1e-14
    report = check_noise(params, tol)
    json.dump(report.to_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_simulate(args) -> int:
    buckets = args.buckets if args.buckets and args.buckets >= 2 else None
    if (args.input is None) == (args.synth is None):
        raise InvalidParameter("give exactly one of --input and --synth")
    if args.input is not None:
        bucketing = None
        if args.raw and buckets:
            bucketing = Bucketization(buckets, 0.0, args.raw_high, True)
        data = load_dataset(args.input, bucketing, buckets)
        if args.n is not None:
            data = data[: args.n]
    else:
        if args.n is None:
            raise InvalidParameter("--synth needs --n")
        data = synth_dataset(args.synth, args.n, buckets, args.seed)
    n = len(data)
    params = calibrate(args.mechanism, args.eps, args.delta, n=n, buckets=buckets, gamma=args.gamma)
    params = replace(params, n=n)
    result = run_experiment(data, params, args.trials, args.seed)
    row = MetricsRow(
        mechanism=args.mechanism,
        epsilon=args.eps,
        delta=args.delta,
        n=n,
        buckets=buckets,
        rmse=result.rmse,
        mean_linf=result.mean_linf,
        mean_extra_messages=result.mean_extra_messages,
        bits_per_user=result.bits_per_user,
        calibration=params.record(),
        optimistic=params.optimistic,
    )
    fmt = args.format or ("json" if args.out and args.out.endswith(".json") else "csv")
    if args.out:
        write_rows([row], args.out, fmt)
    else:
        sys.stdout.write(rows_to_csv([row]) if fmt == "csv" else rows_to_json([row]))
    return 0


def cmd_sweep(args) -> int:
    config = ExperimentConfig.load(args.config)
    rows = run_sweep(config, args.scale)
    fmt = args.format or config.format
    out = args.out or config.output
    if out:
        write_rows(rows, out, fmt)
    else:
        sys.stdout.write(rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shuffledp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="calibrate a mechanism's noise")
    p.add_argument("--mechanism", required=True, choices=MECHANISMS)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--gamma", type=float, help="use the near-central recipe for correlated noise")
    p.add_argument("--sensitivity", type=int, default=1)
    p.add_argument("--n", type=int)
    p.add_argument("--buckets", type=int, help="histogram size; omit for binary summation")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("check", help="divergence of given noise parameters")
    p.add_argument("--mechanism", required=True, choices=MECHANISMS)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--p-flip", dest="p_flip", type=float)
    p.add_argument("--eps1", type=float, help="difference-noise level for correlated noise")
    p.add_argument("--sensitivity", type=int, default=1)
    p.add_argument("--n", type=int)
    p.add_argument("--buckets", type=int)
    p.add_argument("--delta", type=float, help="target delta; sets the truncation budget to 1e-4 of it")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="calibrate and simulate one mechanism")
    p.add_argument("--mechanism", required=True, choices=MECHANISMS)
    p.add_argument("--input", help="CSV file, one value per line")
    p.add_argument("--synth", help="uniform | zipf(s) | point-mass(j)")
    p.add_argument("--raw", action="store_true", help="bucketize raw input values")
    p.add_argument("--raw-high", dest="raw_high", type=float, default=100_000.0)
    p.add_argument("--n", type=int)
    p.add_argument("--buckets", type=int)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-6)
    p.add_argument("--gamma", type=float)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run an experiment grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--scale", type=int, default=1, help="divide n by this factor")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidParameter, CalibrationError, DatasetError, TruncationBudgetExceeded, OSError) as exc:
        print(f"shuffledp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
