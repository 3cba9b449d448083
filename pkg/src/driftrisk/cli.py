"""Command-line surface: simulate, monitor, sweep, calibrate.

Exit codes are a stable contract:

  0  success (monitor: completed with no alert)
  1  usage or config error
  2  data or validation error
  3  monitor completed and at least one alert was raised
  4  detector uninformative

Environment variables may override parallelism (DRIFTRISK_JOBS) but never
experiment parameters; seeds change only via --seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig, SCHEMA_VERSION, load_run_config
from .errors import (
    CalibrationError,
    DriftRiskError,
    SnapshotError,
    UninformativeDetectorError,
    ValidationError,
)
from .estimation import calibrate_profile, conditional_accuracy
from .event_tree import TreeParams
from .experiments import (
    accuracy_error_sweep,
    cba_surface,
    derive_seed,
    rate_error_sweep,
    risk_curve,
)
from .detectors import SyntheticDetector
from .monitor import Monitor
from .simulation import generate_stream, ind_percentile_threshold, run_deployment

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ALERT = 3
EXIT_UNINFORMATIVE = 4

_SIM_DETECTOR_TAG = 7
_SIM_VALIDATION_TAG = 8


class _CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _load_config(path: str) -> RunConfig:
    try:
        return load_run_config(path)
    except FileNotFoundError:
        raise _CliError(EXIT_USAGE, f"config file not found: {path}") from None
    except DriftRiskError as exc:
        raise _CliError(EXIT_USAGE, f"config error: {exc}") from exc


def _require(config: RunConfig, *sections: str) -> None:
    try:
        config.require(*sections)
    except ValidationError as exc:
        raise _CliError(EXIT_USAGE, str(exc)) from exc


def _simulate_threshold(config: RunConfig, stream_config) -> float:
    """Batch-correctness threshold for a simulated deployment.

    Explicit in the config when given; otherwise 0.5 for single-sample
    batches and the 1st-percentile clean-validation rule for larger ones,
    seeded deterministically from the (possibly overridden) stream seed.
    """
    if config.stream.correct_threshold is not None:
        return config.stream.correct_threshold
    if stream_config.batch_size == 1:
        return 0.5
    rng = np.random.default_rng(derive_seed(stream_config.seed, _SIM_VALIDATION_TAG))
    accs = (
        rng.random((1000, stream_config.batch_size)) < config.oracle.ind_accuracy
    ).mean(axis=1)
    return ind_percentile_threshold(accs, 1.0)


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    _require(config, "stream", "oracle", "monitor")
    stream_config = config.stream.config
    if args.seed is not None:
        stream_config = replace(stream_config, seed=args.seed)
    stream = generate_stream(stream_config, config.oracle)
    detector = SyntheticDetector(
        config.monitor.profile, derive_seed(stream_config.seed, _SIM_DETECTOR_TAG)
    )
    monitor = Monitor(config.monitor)
    trace = run_deployment(
        stream, detector, monitor, _simulate_threshold(config, stream_config)
    )
    output = Path(args.output)
    if args.format == "structured":
        with open(output, "w", encoding="utf-8") as handle:
            for row in io.trace_rows(trace):
                io.emit_assessment(handle, row, "structured")
    else:
        io.write_trace_csv(output, trace)
    return EXIT_OK


def cmd_monitor(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    _require(config, "monitor")
    monitor = Monitor(config.monitor)

    if args.input is None or args.input == "-":
        lines = sys.stdin
        close_input = None
    else:
        try:
            close_input = open(args.input, encoding="utf-8")
        except OSError as exc:
            raise _CliError(EXIT_DATA, f"cannot read verdicts: {exc}") from exc
        lines = close_input

    out_handle = sys.stdout if args.output is None else open(args.output, "w", encoding="utf-8")
    any_alert = False
    try:
        if args.format != "structured":
            out_handle.write(",".join(io.ASSESSMENT_COLUMNS) + "\n")
        for index, verdict in enumerate(io.iter_verdicts(lines)):
            assessment = monitor.observe(verdict)
            any_alert = any_alert or assessment.alert
            io.emit_assessment(
                out_handle, io.assessment_row(index, verdict, assessment), args.format
            )
    except ValidationError as exc:
        raise _CliError(EXIT_DATA, f"verdict stream: {exc}") from exc
    finally:
        if close_input is not None:
            close_input.close()
        if out_handle is not sys.stdout:
            out_handle.close()
    return EXIT_ALERT if any_alert else EXIT_OK


_RATE_REPORT_COLUMNS = (
    "trace_length", "tpr", "tnr", "ba", "rate",
    "n", "mae", "mean_signed_error", "refused",
)
_ACCURACY_REPORT_COLUMNS = (
    "batch_size", "trace_length", "tpr", "tnr", "ba", "rate",
    "n", "mae", "mean_signed_error", "baseline_mae", "refused",
)
_RISK_REPORT_COLUMNS = (
    "kind", "rate", "estimated_rv", "actual_rv", "estimated_base", "actual_base",
)
_CBA_REPORT_COLUMNS = ("classifier_delta", "detector_delta", "risk")


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    _require(config, "sweep")
    sweep = config.sweep
    master_seed = sweep.master_seed if args.seed is None else args.seed
    output = Path(args.output)
    output.mkdir(parents=True, exist_ok=True)
    metadata = {
        "schema_version": SCHEMA_VERSION,
        "kind": args.kind,
        "master_seed": master_seed,
        "grid": sweep.to_dict(),
    }

    if args.kind == "rate-error":
        report = rate_error_sweep(sweep.to_grid(master_seed), jobs=args.jobs)
        io.write_rows_csv(output / "report.csv", report.to_rows(), _RATE_REPORT_COLUMNS)
    elif args.kind == "accuracy-error":
        _require(config, "oracle")
        report = accuracy_error_sweep(
            sweep.to_grid(master_seed), config.oracle, jobs=args.jobs
        )
        io.write_rows_csv(
            output / "report.csv", report.to_rows(), _ACCURACY_REPORT_COLUMNS
        )
    elif args.kind == "risk-curve":
        _require(config, "oracle", "monitor")
        if config.monitor.costs is None or config.monitor.risk_threshold is None:
            raise _CliError(
                EXIT_USAGE, "risk-curve needs monitor costs and risk_threshold"
            )
        result = risk_curve(
            sweep.rates,
            config.oracle,
            config.monitor.profile,
            config.monitor.costs,
            config.monitor.risk_threshold,
            horizon=sweep.risk_horizon,
            trace_length=sweep.risk_trace_length,
            master_seed=master_seed,
        )
        rows = [{"kind": "point", **row} for row in result.to_rows()]
        for curve, rate in sorted(result.crossings.items()):
            rows.append({"kind": f"crossing_{curve}", "rate": rate})
        io.write_rows_csv(output / "report.csv", rows, _RISK_REPORT_COLUMNS)
        metadata["crossings"] = result.crossings
        metadata["threshold"] = result.threshold
    elif args.kind == "cba":
        _require(config, "monitor")
        if config.monitor.costs is None:
            raise _CliError(EXIT_USAGE, "cba needs monitor costs")
        if sweep.operating_rate is None:
            raise _CliError(EXIT_USAGE, "cba needs sweep.operating_rate")
        table = config.monitor.accuracies
        params = TreeParams(
            p_event=sweep.operating_rate,
            accuracies=table.tree_accuracies(),
            tpr=config.monitor.profile.tpr,
            tnr=config.monitor.profile.tnr,
            data_free=table.data_free_conditions(),
        )
        result = cba_surface(
            sweep.classifier_deltas,
            sweep.detector_deltas,
            params,
            config.monitor.costs,
        )
        io.write_rows_csv(output / "report.csv", result.rows, _CBA_REPORT_COLUMNS)
        metadata["detector_marginal"] = result.detector_marginal
        metadata["classifier_marginal"] = result.classifier_marginal
    else:  # pragma: no cover - argparse choices guard this
        raise _CliError(EXIT_USAGE, f"unknown sweep kind {args.kind!r}")

    io.write_json(output / "metadata.json", metadata)
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    try:
        records = io.read_labeled_records(args.input)
    except FileNotFoundError:
        raise _CliError(EXIT_DATA, f"labeled data file not found: {args.input}") from None
    except (CalibrationError, ValidationError) as exc:
        raise _CliError(EXIT_DATA, str(exc)) from exc
    judged = [(verdict, is_ood) for is_ood, verdict, _ in records if verdict is not None]
    if not judged:
        raise _CliError(
            EXIT_DATA, "labeled data has no verdict values; cannot calibrate a profile"
        )
    try:
        profile = calibrate_profile(judged)
    except CalibrationError as exc:
        raise _CliError(EXIT_DATA, str(exc)) from exc
    table = conditional_accuracy(records)
    fragment = {
        "schema_version": SCHEMA_VERSION,
        "monitor": {
            "profile": {"tpr": profile.tpr, "tnr": profile.tnr},
            "accuracies": table.to_dict(),
        },
    }
    io.write_json(Path(args.output), fragment)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftrisk",
        description="Runtime accuracy and risk assessment for deployed models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
        if needs_config:
            p.add_argument("--config", required=True, help="path to a JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--format",
            choices=("csv", "structured"),
            default="csv",
            help="record output format",
        )

    p_sim = sub.add_parser("simulate", help="run one simulated deployment")
    common(p_sim)
    p_sim.add_argument("--output", required=True, help="trace file to write")
    p_sim.set_defaults(func=cmd_simulate)

    p_mon = sub.add_parser("monitor", help="assess a verdict stream")
    common(p_mon)
    p_mon.add_argument("--input", default=None, help="verdict file (default: stdin)")
    p_mon.add_argument("--output", default=None, help="assessment file (default: stdout)")
    p_mon.set_defaults(func=cmd_monitor)

    p_sweep = sub.add_parser("sweep", help="run an experiment sweep")
    p_sweep.add_argument(
        "kind", choices=("rate-error", "accuracy-error", "risk-curve", "cba")
    )
    common(p_sweep)
    p_sweep.add_argument("--output", required=True, help="output directory")
    p_sweep.add_argument(
        "--jobs",
        type=int,
        default=int(os.environ.get("DRIFTRISK_JOBS", "1")),
        help="parallel workers across sweep cells",
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_cal = sub.add_parser("calibrate", help="fit a profile and accuracy table")
    p_cal.add_argument("--input", required=True, help="labeled CSV (is_ood,verdict,is_correct)")
    p_cal.add_argument("--output", required=True, help="config fragment to write")
    p_cal.set_defaults(func=cmd_calibrate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except _CliError as exc:
        print(f"driftrisk: {exc}", file=sys.stderr)
        return exc.code
    except UninformativeDetectorError as exc:
        print(f"driftrisk: {exc}", file=sys.stderr)
        return EXIT_UNINFORMATIVE
    except SnapshotError as exc:
        print(f"driftrisk: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DriftRiskError as exc:
        print(f"driftrisk: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"driftrisk: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
