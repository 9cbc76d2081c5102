"""Command-line interface.

Subcommands: ``generate`` (synthetic dataset), ``train``, ``evaluate``,
``ablate`` (feature/component ablation table), ``sweep`` (input-horizon
sweep), and ``gradcheck`` (finite-difference verification of every
trained model family).

Settings come from defaults, then an optional ``--config`` file of flat
``key=value`` lines, then explicit flags, in increasing precedence.
Report-producing commands write the effective configuration next to
their outputs; that file re-parses to identical settings.  Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path
from typing import Any, Callable, Sequence, TextIO

from threadpoolctl import threadpool_limits

from .baselines import (
    DfdsForecaster,
    Forecaster,
    HistoricalAverageForecaster,
    KnnForecaster,
    MODEL_REGISTRY,
)
from .checkpoint import load_forecaster, save_forecaster
from .data import serialize_records
from .errors import (
    ChargecastError,
    ConfigError,
    DataError,
    NotFittedError,
    NumericalError,
    ShapeError,
    UsageError,
)
from .experiments import (
    ABLATION_CSV_HEADER,
    RunConfig,
    SWEEP_CSV_HEADER,
    ablation_rows,
    build_training_data,
    evaluate_forecaster,
    fit_forecaster,
    load_series,
    make_split,
    run_ablation_table,
    run_gradcheck,
    run_horizon_sweep,
    sweep_rows,
)
from .features import save_profiles_csv
from .metrics import write_metrics_csv
from .synthetic import SyntheticConfig, generate_synthetic
from .training import write_training_log

DEFAULT_SWEEP_HOURS = (8, 12, 16, 24)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exceptions, not exits."""

    def error(self, message: str):  # noqa: D401 - argparse hook
        raise UsageError(message)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _parse_hours_list(text: str) -> tuple[int, ...]:
    try:
        hours = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise UsageError(f"bad hours list {text!r}; expected comma-separated integers") from None
    if not hours:
        raise UsageError(f"bad hours list {text!r}; expected comma-separated integers")
    return hours


# Keys accepted in config files for the run-oriented commands, with their
# converters.  These mirror the flags one for one.
_RUN_KEYS: dict[str, Callable[[str], Any]] = {
    "model": str,
    "seed": int,
    "input_hours": int,
    "output_hours": int,
    "hidden": int,
    "epochs": int,
    "lr": float,
    "batch_size": int,
    "test_weeks": int,
    "train_stride": int,
    "eval_stride": int,
    "threads": int,
    "weekday_profiles": _parse_bool,
}

_GENERATE_KEYS: dict[str, Callable[[str], Any]] = {
    "stations": int,
    "weeks": int,
    "target_rate": float,
    "dwell": float,
    "seed": int,
}


def read_config_file(path: str | Path, keys: dict[str, Callable[[str], Any]]) -> dict[str, Any]:
    """Parse a flat key=value config file; unknown keys are usage errors."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    out: dict[str, Any] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in keys:
            raise UsageError(f"{path}:{line_no}: unknown config key {key!r}")
        try:
            out[key] = keys[key](value)
        except (ValueError, UsageError) as exc:
            raise UsageError(f"{path}:{line_no}: bad value for {key!r}: {exc}") from None
    return out


def _merge_settings(
    args: argparse.Namespace, keys: dict[str, Callable[[str], Any]], defaults: dict[str, Any]
) -> tuple[dict[str, Any], set[str]]:
    """defaults < config file < explicit flags; returns (settings, explicit keys)."""
    settings = dict(defaults)
    explicit: set[str] = set()
    config_path = getattr(args, "config", None)
    if config_path:
        file_vals = read_config_file(config_path, keys)
        settings.update(file_vals)
        explicit.update(file_vals)
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
            explicit.add(key)
    return settings, explicit


def _run_config_from(settings: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig(**settings)
    except TypeError as exc:
        raise UsageError(str(exc)) from None


def write_effective_config(settings: dict[str, Any], path: Path) -> None:
    """Emit key=value lines that re-parse to the same settings."""
    lines = []
    for key in sorted(settings):
        value = settings[key]
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        elif isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        else:
            text = str(value)
        lines.append(f"{key}={text}")
    path.write_text("\n".join(lines) + "\n")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(list(header))
        writer.writerows(rows)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_split(args: argparse.Namespace, run: RunConfig):
    series, duplicates = load_series(args.data)
    if duplicates:
        print(f"warning: dropped {duplicates} duplicate records", file=sys.stderr)
    return make_split(series, run.test_weeks)


def _forecaster_horizons(fc: Forecaster) -> tuple[int, int] | None:
    """Intrinsic (input, output) slot horizons of a fitted forecaster."""
    if isinstance(fc, DfdsForecaster):
        return fc.config.input_slots, fc.config.output_slots
    if isinstance(fc, HistoricalAverageForecaster):
        return None
    if isinstance(fc, KnnForecaster):
        return fc.inputs.shape[1], fc.targets.shape[1]
    return fc.input_slots, fc.output_slots  # type: ignore[attr-defined]


# ---------------------------------------------------------------------------
# Subcommands


def cmd_generate(args: argparse.Namespace) -> int:
    defaults = {"stations": 50, "weeks": 20, "target_rate": 0.088, "dwell": 6.0, "seed": 0}
    settings, _ = _merge_settings(args, _GENERATE_KEYS, defaults)
    config = SyntheticConfig(
        n_stations=settings["stations"],
        n_weeks=settings["weeks"],
        target_rate=settings["target_rate"],
        mean_dwell_slots=settings["dwell"],
        seed=settings["seed"],
    )
    records = generate_synthetic(config)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    serialize_records(records, out)
    print(f"wrote {len(records)} records for {settings['stations']} stations to {out}")
    return 0


def _run_defaults() -> dict[str, Any]:
    return {f.name: f.default for f in dataclasses.fields(RunConfig)}


def cmd_train(args: argparse.Namespace) -> int:
    settings, _ = _merge_settings(args, _RUN_KEYS, _run_defaults())
    run = _run_config_from(settings)
    out = _out_dir(args)
    with threadpool_limits(limits=run.threads):
        split = _load_split(args, run)
        data = build_training_data(split, run)
        fc, history = fit_forecaster(run, data)
    save_forecaster(fc, out / "model.ckpt")
    save_profiles_csv(data.profiles, out / "profiles.csv")
    write_effective_config(settings, out / "effective_config.txt")
    artifacts = [out / "model.ckpt", out / "profiles.csv", out / "effective_config.txt"]
    if history is not None:
        write_training_log(history, out / "training_log.csv")
        from .plots import plot_loss_curve

        plot_loss_curve(history, out / "loss_curve.png")
        artifacts += [out / "training_log.csv", out / "loss_curve.png"]
        print(f"trained {run.model} on {len(data.windows)} windows; final loss {history[-1]:.6f}")
    else:
        print(f"fitted {run.model} on {len(data.windows)} windows (closed form, no training log)")
    for p in artifacts:
        print(f"wrote {p}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    settings, explicit = _merge_settings(args, _RUN_KEYS, _run_defaults())
    run = _run_config_from(settings)
    fc = load_forecaster(args.checkpoint)
    horizons = _forecaster_horizons(fc)
    if horizons is not None:
        i, o = horizons
        if "input_hours" in explicit and run.input_slots != i:
            raise DataError(
                f"horizon mismatch: checkpoint expects {i} input slots, flags give {run.input_slots}"
            )
        if "output_hours" in explicit and run.output_slots != o:
            raise DataError(
                f"horizon mismatch: checkpoint expects {o} output slots, flags give {run.output_slots}"
            )
        settings["input_hours"] = i // 4 if i % 4 == 0 else settings["input_hours"]
        settings["output_hours"] = o // 4 if o % 4 == 0 else settings["output_hours"]
    else:
        i, o = run.input_slots, run.output_slots
    out = _out_dir(args)
    with threadpool_limits(limits=run.threads):
        split = _load_split(args, run)
        report = evaluate_forecaster(fc, split, run, input_slots=i, output_slots=o)
    write_metrics_csv(report, out / "metrics.csv")
    write_effective_config(settings, out / "effective_config.txt")
    from .plots import plot_metrics_report

    plot_metrics_report(report, out / "metrics.png")
    m = report.macro
    print(
        f"macro precision {m.precision:.4f}, recall {m.recall:.4f}, F1 {m.f1:.4f}"
        + (" (degenerate sets present)" if m.degenerate else "")
    )
    for name in ("metrics.csv", "metrics.png", "effective_config.txt"):
        print(f"wrote {out / name}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    settings, _ = _merge_settings(args, _RUN_KEYS, _run_defaults())
    if settings["model"] != "dfds":
        raise UsageError(f"ablations apply to the fused model only, got model={settings['model']!r}")
    run = _run_config_from(settings)
    out = _out_dir(args)
    with threadpool_limits(limits=run.threads):
        split = _load_split(args, run)
        results = run_ablation_table(split, run, log=sys.stderr)
    _write_csv(out / "ablation.csv", ABLATION_CSV_HEADER, ablation_rows(results))
    write_effective_config(settings, out / "effective_config.txt")
    from .plots import plot_ablation_deltas

    plot_ablation_deltas(results, out / "ablation.png")
    for name in ("ablation.csv", "ablation.png", "effective_config.txt"):
        print(f"wrote {out / name}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    keys = {**_RUN_KEYS, "hours": _parse_hours_list}
    defaults = {**_run_defaults(), "hours": DEFAULT_SWEEP_HOURS}
    settings, _ = _merge_settings(args, keys, defaults)
    hours = settings["hours"]
    run = _run_config_from({k: v for k, v in settings.items() if k != "hours"})
    out = _out_dir(args)
    with threadpool_limits(limits=run.threads):
        split = _load_split(args, run)
        results = run_horizon_sweep(split, run, hours, log=sys.stderr)
    _write_csv(out / "sweep.csv", SWEEP_CSV_HEADER, sweep_rows(results))
    write_effective_config(settings, out / "effective_config.txt")
    from .plots import plot_horizon_sweep

    plot_horizon_sweep(results, out / "sweep.png")
    for name in ("sweep.csv", "sweep.png", "effective_config.txt"):
        print(f"wrote {out / name}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    with threadpool_limits(limits=args.threads if args.threads else 1):
        results = run_gradcheck(seed=seed, inject_fault=args.inject_fault)
    rows = []
    failed = False
    for model, report in results:
        status = "PASS" if report.passed else "FAIL"
        failed = failed or not report.passed
        print(
            f"{model}: {status} max_rel_error={report.max_rel_error:.3e} "
            f"tolerance={report.tolerance:.1e} n_params={report.n_params} "
            f"worst={report.worst_block}[{report.worst_offset}]"
        )
        rows.append(
            [
                model,
                status,
                repr(report.max_rel_error),
                repr(report.tolerance),
                str(report.n_params),
                report.worst_block,
                str(report.worst_offset),
            ]
        )
    if args.out:
        out = _out_dir(args)
        _write_csv(
            out / "gradcheck.csv",
            ["model", "status", "max_rel_error", "tolerance", "n_params", "worst_block", "worst_offset"],
            rows,
        )
        print(f"wrote {out / 'gradcheck.csv'}")
    if failed:
        raise NumericalError("gradient check failed for at least one model")
    return 0


# ---------------------------------------------------------------------------
# Parser wiring


def _add_run_flags(p: argparse.ArgumentParser, with_model: bool = True) -> None:
    p.add_argument("--config", help="flat key=value settings file; flags override it")
    if with_model:
        p.add_argument("--model", choices=sorted(MODEL_REGISTRY), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--input-hours", type=int, dest="input_hours", default=None)
    p.add_argument("--output-hours", type=int, dest="output_hours", default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=None)
    p.add_argument("--test-weeks", type=int, dest="test_weeks", default=None)
    p.add_argument("--train-stride", type=int, dest="train_stride", default=None)
    p.add_argument("--eval-stride", type=int, dest="eval_stride", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument(
        "--weekday-profiles",
        action="store_const",
        const=True,
        default=None,
        dest="weekday_profiles",
        help="condition static profiles on the weekday (672 buckets instead of 96)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="chargecast",
        description="Charging-station occupancy forecasting: synthetic data, "
        "training, evaluation, ablations, horizon sweeps, gradient checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic occupancy dataset CSV")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--config", help="flat key=value settings file; flags override it")
    p.add_argument("--stations", type=int, default=None)
    p.add_argument("--weeks", type=int, default=None)
    p.add_argument("--target-rate", type=float, dest="target_rate", default=None)
    p.add_argument("--dwell", type=float, default=None, help="mean occupied dwell time in slots")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a forecaster and checkpoint it")
    p.add_argument("--data", required=True, help="occupancy CSV")
    p.add_argument("--out", required=True, help="output directory")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on the test weeks")
    p.add_argument("--data", required=True, help="occupancy CSV")
    p.add_argument("--checkpoint", required=True, help="checkpoint file from train")
    p.add_argument("--out", required=True, help="output directory")
    _add_run_flags(p, with_model=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train the full fused model and every single ablation")
    p.add_argument("--data", required=True, help="occupancy CSV")
    p.add_argument("--out", required=True, help="output directory")
    _add_run_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="retrain per input horizon and tabulate macro scores")
    p.add_argument("--data", required=True, help="occupancy CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--hours",
        type=_parse_hours_list,
        default=None,
        help="comma-separated input horizons in hours",
    )
    _add_run_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of all trained model families")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="optional directory for the report CSV")
    p.add_argument(
        "--inject-fault",
        action="store_true",
        dest="inject_fault",
        help="mis-scale the analytic gradient to prove the check can fail",
    )
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ShapeError, NotFittedError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
