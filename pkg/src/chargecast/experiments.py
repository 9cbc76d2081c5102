"""End-to-end pipelines: load, split, train, evaluate, ablate, sweep.

These functions are the substance behind the CLI subcommands and are
importable for programmatic use.  Everything is deterministic given
(config, seed, input data): splits derive from the data span, training
uses the seeded loop, and evaluation walks windows in a fixed order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .baselines import DfdsForecaster, Forecaster, make_forecaster
from .data import (
    SLOTS_PER_WEEK,
    DatasetSplit,
    StationSeries,
    TimeSlot,
    Window,
    build_series,
    make_windows,
    parse_records,
    split_train_test,
)
from .errors import ConfigError, DataError
from .features import build_static_profiles
from .metrics import ConfusionCounts, MetricsReport, confusion_counts
from .model import DfdsConfig
from .numerics import make_rng
from .training import GradCheckReport, TrainConfig, TrainingData, gradient_check


@dataclass(frozen=True)
class RunConfig:
    """Settings of one training/evaluation run.

    Horizons are configured in hours and convert exactly to slots at 4
    slots per hour.  ``train_stride``/``eval_stride`` thin the window
    grids; 1 uses every offset.
    """

    model: str = "dfds"
    seed: int = 0
    input_hours: int = 16
    output_hours: int = 8
    hidden: int = 100
    epochs: int = 20
    lr: float = 0.001
    batch_size: int = 64
    test_weeks: int = 5
    train_stride: int = 1
    eval_stride: int = 1
    threads: int = 1
    weekday_profiles: bool = False

    def __post_init__(self) -> None:
        for name in (
            "input_hours",
            "output_hours",
            "hidden",
            "epochs",
            "batch_size",
            "test_weeks",
            "train_stride",
            "eval_stride",
            "threads",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not (self.lr > 0 and np.isfinite(self.lr)):
            raise ConfigError(f"lr must be positive and finite, got {self.lr}")

    @property
    def input_slots(self) -> int:
        return self.input_hours * 4

    @property
    def output_slots(self) -> int:
        return self.output_hours * 4

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr=self.lr,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def dfds_config(self) -> DfdsConfig:
        return DfdsConfig(
            input_slots=self.input_slots,
            output_slots=self.output_slots,
            d_encoder=self.hidden,
            d_static=self.hidden,
            d_fusion=self.hidden,
            d_decoder=self.hidden,
        )


def load_series(path: str | Path) -> tuple[list[StationSeries], int]:
    """Parse a dataset CSV into series; returns (series, duplicate count)."""
    result = parse_records(path)
    if not result.records:
        raise DataError(f"dataset {path} contains no records")
    return build_series(result.records), result.duplicate_count


def make_split(series: Sequence[StationSeries], test_weeks: int) -> DatasetSplit:
    """Split so the last ``test_weeks`` whole weeks of the span are test data."""
    if not series:
        raise DataError("no series to split")
    data_end = max(s.start.epoch_slot + len(s) for s in series)
    train_end = TimeSlot(data_end - test_weeks * SLOTS_PER_WEEK)
    return split_train_test(series, train_end, test_weeks)


def build_training_data(split: DatasetSplit, run: RunConfig) -> TrainingData:
    """Training windows and profiles; both are computed on train data only."""
    windows = make_windows(split.train, run.input_slots, run.output_slots, run.train_stride)
    if not windows:
        raise DataError(
            f"no training windows: series shorter than {run.input_slots + run.output_slots} slots"
        )
    profiles = build_static_profiles(split.train, weekday_conditioned=run.weekday_profiles)
    return TrainingData(windows=tuple(windows), series=tuple(split.train), profiles=profiles)


def fit_forecaster(
    run: RunConfig, data: TrainingData, dfds_config: DfdsConfig | None = None
) -> tuple[Forecaster, list[float] | None]:
    """Construct and fit the configured model; returns it with its loss history."""
    fc = make_forecaster(
        run.model,
        input_slots=run.input_slots,
        output_slots=run.output_slots,
        hidden=run.hidden,
        dfds_config=dfds_config,
    )
    history = fc.fit(data, run.train_config())
    return fc, history


def evaluate_forecaster(
    fc: Forecaster, split: DatasetSplit, run: RunConfig, input_slots: int | None = None, output_slots: int | None = None
) -> MetricsReport:
    """Score a fitted forecaster on every test week of the split."""
    i = input_slots if input_slots is not None else run.input_slots
    o = output_slots if output_slots is not None else run.output_slots
    counts: list[ConfusionCounts] = []
    for k, week in enumerate(split.test_weeks, start=1):
        windows = make_windows(week, i, o, run.eval_stride)
        if not windows:
            raise DataError(f"test week {k} yields no evaluation windows")
        preds = fc.predict_batch(windows)
        targets = np.stack([w.target_occ for w in windows])
        counts.append(confusion_counts(preds, targets))
    return MetricsReport.from_counts(counts)


def train_and_evaluate(
    run: RunConfig, split: DatasetSplit, dfds_config: DfdsConfig | None = None
) -> tuple[Forecaster, list[float] | None, MetricsReport]:
    """The full pipeline used by the train/evaluate/ablate/sweep commands."""
    data = build_training_data(split, run)
    fc, history = fit_forecaster(run, data, dfds_config=dfds_config)
    report = evaluate_forecaster(fc, split, run)
    return fc, history, report


# ---------------------------------------------------------------------------
# Feature ablations


@dataclass(frozen=True)
class AblationSpec:
    """One structural change relative to the full model.

    At most one of the three toggles may be set.  Component drops remove
    a whole branch (the recurrent encoder, or all static encoders);
    feature drops remove one dynamic feature block or one static
    encoder.  Dropping the occupation feature also replaces the
    decoder's bootstrap input with a constant, since the last observed
    occupancy is occupancy information by another route.
    """

    name: str
    drop_dynamic_component: bool = False
    drop_static_component: bool = False
    drop_feature: str | None = None

    def __post_init__(self) -> None:
        toggles = (
            int(self.drop_dynamic_component)
            + int(self.drop_static_component)
            + int(self.drop_feature is not None)
        )
        if toggles > 1:
            raise ConfigError(f"ablation {self.name!r} sets more than one toggle")
        valid = {"occupation", "day_of_week", "time_of_day", "mean", "q25", "q75"}
        if self.drop_feature is not None and self.drop_feature not in valid:
            raise ConfigError(f"unknown drop_feature {self.drop_feature!r}, expected one of {sorted(valid)}")


ABLATIONS: tuple[AblationSpec, ...] = (
    AblationSpec(name="full"),
    AblationSpec(name="no_dynamic_component", drop_dynamic_component=True),
    AblationSpec(name="no_static_component", drop_static_component=True),
    AblationSpec(name="no_occupation", drop_feature="occupation"),
    AblationSpec(name="no_day_of_week", drop_feature="day_of_week"),
    AblationSpec(name="no_time_of_day", drop_feature="time_of_day"),
    AblationSpec(name="no_mean", drop_feature="mean"),
    AblationSpec(name="no_q25", drop_feature="q25"),
    AblationSpec(name="no_q75", drop_feature="q75"),
)


def apply_ablation(base: DfdsConfig, spec: AblationSpec) -> DfdsConfig:
    """Derive the ablated model configuration from the full one."""
    if spec.drop_dynamic_component:
        return dataclasses.replace(base, use_dynamic=False)
    if spec.drop_static_component:
        return dataclasses.replace(base, use_static=False)
    if spec.drop_feature is None:
        return base
    if spec.drop_feature in ("mean", "q25", "q75"):
        remaining = tuple(f for f in base.static_features if f != spec.drop_feature)
        return dataclasses.replace(base, static_features=remaining)
    layout = base.dynamic_layout
    if spec.drop_feature == "occupation":
        layout = dataclasses.replace(layout, occupation=False)
        return dataclasses.replace(base, dynamic_layout=layout, bootstrap_last_obs=False)
    if spec.drop_feature == "day_of_week":
        layout = dataclasses.replace(layout, day_of_week=False)
    else:
        layout = dataclasses.replace(layout, time_of_day=False)
    return dataclasses.replace(base, dynamic_layout=layout)


@dataclass(frozen=True)
class AblationResult:
    spec: AblationSpec
    report: MetricsReport


def run_ablation_table(
    split: DatasetSplit, run: RunConfig, log: TextIO | None = None
) -> list[AblationResult]:
    """Train the full model plus every single-toggle ablation on one seed.

    All runs share the master seed so score differences are attributable
    to the structural change rather than initialization noise.
    """
    if run.model != "dfds":
        raise ConfigError(f"ablations apply to the fused model only, got model={run.model!r}")
    base = run.dfds_config()
    results: list[AblationResult] = []
    for spec in ABLATIONS:
        config = apply_ablation(base, spec)
        _, _, report = train_and_evaluate(run, split, dfds_config=config)
        results.append(AblationResult(spec=spec, report=report))
        if log is not None:
            print(f"ablation {spec.name}: macro F1 {report.macro.f1:.4f}", file=log, flush=True)
    return results


ABLATION_CSV_HEADER = [
    "variant",
    "precision",
    "recall",
    "f1",
    "delta_precision_pp",
    "delta_recall_pp",
    "delta_f1_pp",
]


def ablation_rows(results: Sequence[AblationResult]) -> list[list[str]]:
    """CSV rows: macro scores plus percent-point deltas against the full model."""
    if not results or results[0].spec.name != "full":
        raise ConfigError("ablation results must start with the full model")
    full = results[0].report.macro
    rows = []
    for res in results:
        m = res.report.macro
        rows.append(
            [
                res.spec.name,
                repr(m.precision),
                repr(m.recall),
                repr(m.f1),
                repr((m.precision - full.precision) * 100.0),
                repr((m.recall - full.recall) * 100.0),
                repr((m.f1 - full.f1) * 100.0),
            ]
        )
    return rows


# ---------------------------------------------------------------------------
# Input-horizon sweep


SWEEP_CSV_HEADER = ["input_hours", "i", "precision", "recall", "f1"]


@dataclass(frozen=True)
class SweepResult:
    input_hours: int
    report: MetricsReport


def run_horizon_sweep(
    split: DatasetSplit, run: RunConfig, hours: Sequence[int], log: TextIO | None = None
) -> list[SweepResult]:
    """Retrain the configured model once per input horizon."""
    if not hours:
        raise ConfigError("horizon sweep needs at least one hours value")
    results: list[SweepResult] = []
    for h in hours:
        if h < 1:
            raise ConfigError(f"input horizon must be >= 1 hour, got {h}")
        sub_run = dataclasses.replace(run, input_hours=h)
        _, _, report = train_and_evaluate(sub_run, split)
        results.append(SweepResult(input_hours=h, report=report))
        if log is not None:
            print(f"input horizon {h} h: macro F1 {report.macro.f1:.4f}", file=log, flush=True)
    return results


def sweep_rows(results: Sequence[SweepResult]) -> list[list[str]]:
    rows = []
    for res in results:
        m = res.report.macro
        rows.append(
            [
                str(res.input_hours),
                str(res.input_hours * 4),
                repr(m.precision),
                repr(m.recall),
                repr(m.f1),
            ]
        )
    return rows


# ---------------------------------------------------------------------------
# Gradient-check harness (small fixtures, all trained models)


GRADCHECK_MODELS = ("dfds", "seq2seq", "gru_fc", "logreg")


def _nudge_blocks(fc: Forecaster, rng: np.random.Generator) -> None:
    # Zero-initialized biases can leave ReLU pre-activations exactly on the
    # kink (e.g. when a quantile profile row is all zeros), where central
    # differences disagree with any subgradient.  Shift every block a little
    # so the check runs at a generic point.
    for block in fc.param_blocks().values():  # type: ignore[attr-defined]
        block += rng.uniform(-0.1, 0.1, size=block.shape)


def _gradcheck_fixture(model: str, seed: int) -> tuple[Forecaster, list[Window]]:
    """A tiny fitted-but-untrained model and two windows to check it on."""
    d, i, o = 4, 3, 3
    rng = make_rng(seed)
    occupancy = rng.integers(0, 2, size=SLOTS_PER_WEEK).astype(np.uint8)
    series = StationSeries(station_id="S000", start=TimeSlot(1773792), occupancy=occupancy)
    windows = make_windows([series], i, o, stride=97)[:2]
    if model == "dfds":
        config = DfdsConfig(
            input_slots=i, output_slots=o, d_encoder=d, d_static=d, d_fusion=d, d_decoder=d
        )
        fc = DfdsForecaster(config)
        fc.profiles = build_static_profiles([series])
        fc.initialize(rng)
    else:
        fc = make_forecaster(model, input_slots=i, output_slots=o, hidden=d)
        fc.initialize(rng)  # type: ignore[attr-defined]
    _nudge_blocks(fc, rng)
    return fc, windows


def run_gradcheck(
    seed: int = 0, inject_fault: bool = False, tolerance: float = 1e-4
) -> list[tuple[str, GradCheckReport]]:
    """Gradient-check every trained model family at tiny sizes.

    Steps with eps 1e-4 rather than the finer library default: at 1e-5
    the difference quotient's float64 roundoff (~|loss|*2^-52/eps) is
    comparable to the smallest true gradient entries of these fixtures,
    which would flag correct gradients.
    """
    out: list[tuple[str, GradCheckReport]] = []
    for model in GRADCHECK_MODELS:
        fc, windows = _gradcheck_fixture(model, seed)
        report = gradient_check(
            fc, windows, eps=1e-4, tolerance=tolerance, inject_fault=inject_fault
        )
        out.append((model, report))
    return out
