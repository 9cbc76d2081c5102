"""Run pipelines: configs, splits, ablation table, sweep, gradcheck."""

import io

import numpy as np
import pytest

from chargecast.data import SLOTS_PER_WEEK, build_series, serialize_records
from chargecast.errors import ConfigError, DataError
from chargecast.experiments import (
    ABLATION_CSV_HEADER,
    ABLATIONS,
    GRADCHECK_MODELS,
    AblationSpec,
    RunConfig,
    SWEEP_CSV_HEADER,
    ablation_rows,
    apply_ablation,
    build_training_data,
    evaluate_forecaster,
    fit_forecaster,
    load_series,
    make_split,
    run_ablation_table,
    run_gradcheck,
    run_horizon_sweep,
    sweep_rows,
    train_and_evaluate,
)
from chargecast.model import DfdsConfig
from chargecast.synthetic import DEFAULT_START, SyntheticConfig, generate_synthetic


@pytest.fixture(scope="module")
def small_series():
    records = generate_synthetic(
        SyntheticConfig(n_stations=4, n_weeks=3, target_rate=0.15, seed=7)
    )
    return build_series(records)


@pytest.fixture(scope="module")
def small_split(small_series):
    return make_split(small_series, 1)


def _tiny_run(**kwargs):
    defaults = dict(
        model="dfds",
        input_hours=1,
        output_hours=1,
        hidden=3,
        epochs=1,
        test_weeks=1,
        train_stride=50,
        eval_stride=50,
    )
    defaults.update(kwargs)
    return RunConfig(**defaults)


class TestRunConfig:
    def test_slot_conversion(self):
        run = RunConfig(input_hours=16, output_hours=8)
        assert run.input_slots == 64
        assert run.output_slots == 32

    def test_defaults(self):
        run = RunConfig()
        assert run.model == "dfds"
        assert run.epochs == 20
        assert run.lr == 0.001
        assert run.test_weeks == 5

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"input_hours": 0},
            {"output_hours": 0},
            {"epochs": 0},
            {"test_weeks": 0},
            {"threads": 0},
            {"lr": 0.0},
            {"lr": float("nan")},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            RunConfig(**kwargs)

    def test_train_config_mapping(self):
        run = RunConfig(epochs=7, lr=0.01, batch_size=16, seed=3)
        cfg = run.train_config()
        assert (cfg.epochs, cfg.lr, cfg.batch_size, cfg.seed) == (7, 0.01, 16, 3)

    def test_dfds_config_mapping(self):
        cfg = RunConfig(input_hours=2, output_hours=1, hidden=9).dfds_config()
        assert cfg.input_slots == 8
        assert cfg.output_slots == 4
        assert cfg.d_encoder == cfg.d_static == cfg.d_fusion == cfg.d_decoder == 9


class TestLoadAndSplit:
    def test_load_series_counts_duplicates(self, tmp_path, small_series):
        records = generate_synthetic(SyntheticConfig(n_stations=1, n_weeks=1, seed=0))
        path = tmp_path / "data.csv"
        with open(path, "w") as f:
            serialize_records(records + records[:5], f)
        series, duplicates = load_series(path)
        assert len(series) == 1
        assert duplicates == 5

    def test_load_series_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("station_id,timestamp,occupied\n")
        with pytest.raises(DataError, match="no records"):
            load_series(path)

    def test_split_takes_last_weeks(self, small_series):
        split = make_split(small_series, 1)
        data_end = max(s.start.epoch_slot + len(s) for s in small_series)
        assert split.train_end.epoch_slot == data_end - SLOTS_PER_WEEK
        assert len(split.test_weeks) == 1
        for s in split.train:
            assert s.start.epoch_slot + len(s) <= split.train_end.epoch_slot

    def test_split_requires_series(self):
        with pytest.raises(DataError):
            make_split([], 1)

    def test_build_training_data(self, small_split):
        run = _tiny_run()
        data = build_training_data(small_split, run)
        assert len(data.windows) > 0
        assert all(len(w.input_occ) == 4 for w in data.windows)
        # windows end strictly before the test span
        for w in data.windows:
            assert w.target_epoch_slots()[-1] < small_split.train_end.epoch_slot

    def test_build_training_data_too_short(self, small_split):
        run = _tiny_run(input_hours=400)
        with pytest.raises(DataError, match="no training windows"):
            build_training_data(small_split, run)


class TestTrainEvaluate:
    def test_havg_pipeline(self, small_split):
        run = _tiny_run(model="havg")
        fc, history, report = train_and_evaluate(run, small_split)
        assert history is None
        assert fc.fitted
        assert len(report.counts) == 1
        assert report.counts[0].total > 0

    def test_dfds_pipeline_histories(self, small_split):
        run = _tiny_run(model="dfds", epochs=2)
        fc, history, report = train_and_evaluate(run, small_split)
        assert len(history) == 2
        assert all(np.isfinite(h) for h in history)
        assert 0.0 <= report.macro.f1 <= 1.0

    def test_same_seed_same_report(self, small_split):
        run = _tiny_run(model="logreg", epochs=2)
        reports = [train_and_evaluate(run, small_split)[2] for _ in range(2)]
        assert reports[0] == reports[1]

    def test_evaluate_rejects_empty_week(self, small_split):
        run = _tiny_run(model="havg")
        data = build_training_data(small_split, run)
        fc, _ = fit_forecaster(run, data)
        with pytest.raises(DataError, match="no evaluation windows"):
            evaluate_forecaster(fc, small_split, run, input_slots=SLOTS_PER_WEEK + 4)


class TestAblationSpecs:
    def test_table_layout(self):
        assert len(ABLATIONS) == 9
        assert ABLATIONS[0].name == "full"
        assert len({spec.name for spec in ABLATIONS}) == 9

    def test_multiple_toggles_rejected(self):
        with pytest.raises(ConfigError):
            AblationSpec(name="bad", drop_dynamic_component=True, drop_static_component=True)

    def test_unknown_feature_rejected(self):
        with pytest.raises(ConfigError):
            AblationSpec(name="bad", drop_feature="weather")

    def test_apply_full_is_identity(self):
        base = DfdsConfig(input_slots=8, output_slots=4)
        assert apply_ablation(base, ABLATIONS[0]) is base

    def test_component_drops(self):
        base = DfdsConfig(input_slots=8, output_slots=4, d_encoder=5, d_static=5)
        no_dyn = apply_ablation(base, AblationSpec("x", drop_dynamic_component=True))
        assert not no_dyn.use_dynamic
        assert no_dyn.fusion_input_width == 3 * 5
        no_stat = apply_ablation(base, AblationSpec("x", drop_static_component=True))
        assert not no_stat.use_static
        assert no_stat.fusion_input_width == 5

    def test_static_feature_drop(self):
        base = DfdsConfig(input_slots=8, output_slots=4)
        out = apply_ablation(base, AblationSpec("x", drop_feature="q25"))
        assert out.static_features == ("mean", "q75")

    def test_occupation_drop_also_disables_bootstrap(self):
        base = DfdsConfig(input_slots=8, output_slots=4)
        out = apply_ablation(base, AblationSpec("x", drop_feature="occupation"))
        assert not out.dynamic_layout.occupation
        assert not out.bootstrap_last_obs
        assert out.dynamic_layout.dim == 35

    def test_calendar_feature_drops(self):
        base = DfdsConfig(input_slots=8, output_slots=4)
        no_dow = apply_ablation(base, AblationSpec("x", drop_feature="day_of_week"))
        assert not no_dow.dynamic_layout.day_of_week
        assert no_dow.dynamic_layout.dim == 29
        no_tod = apply_ablation(base, AblationSpec("x", drop_feature="time_of_day"))
        assert not no_tod.dynamic_layout.time_of_day
        assert no_tod.dynamic_layout.dim == 8


class TestAblationTable:
    def test_requires_dfds(self, small_split):
        with pytest.raises(ConfigError):
            run_ablation_table(small_split, _tiny_run(model="havg"))

    def test_runs_all_variants(self, small_split):
        log = io.StringIO()
        results = run_ablation_table(small_split, _tiny_run(), log=log)
        assert [r.spec.name for r in results] == [s.name for s in ABLATIONS]
        assert log.getvalue().count("ablation") == 9
        for r in results:
            assert 0.0 <= r.report.macro.f1 <= 1.0

    def test_rows_and_deltas(self, small_split):
        results = run_ablation_table(small_split, _tiny_run())
        rows = ablation_rows(results)
        assert ABLATION_CSV_HEADER[0] == "variant"
        assert len(rows) == 9
        full = results[0].report.macro
        for row, res in zip(rows, results):
            assert row[0] == res.spec.name
            assert float(row[3]) == res.report.macro.f1
            assert float(row[6]) == pytest.approx((res.report.macro.f1 - full.f1) * 100.0)
        # the full row's deltas are exactly zero
        assert [float(v) for v in rows[0][4:]] == [0.0, 0.0, 0.0]

    def test_rows_require_full_first(self, small_split):
        results = run_ablation_table(small_split, _tiny_run())
        with pytest.raises(ConfigError):
            ablation_rows(results[1:])


class TestHorizonSweep:
    def test_sweep_rows(self, small_split):
        run = _tiny_run(model="logreg")
        results = run_horizon_sweep(small_split, run, hours=[1, 2])
        assert [r.input_hours for r in results] == [1, 2]
        rows = sweep_rows(results)
        assert SWEEP_CSV_HEADER == ["input_hours", "i", "precision", "recall", "f1"]
        assert rows[0][0] == "1" and rows[0][1] == "4"
        assert rows[1][0] == "2" and rows[1][1] == "8"

    def test_empty_hours_rejected(self, small_split):
        with pytest.raises(ConfigError):
            run_horizon_sweep(small_split, _tiny_run(), hours=[])

    def test_bad_hour_rejected(self, small_split):
        with pytest.raises(ConfigError):
            run_horizon_sweep(small_split, _tiny_run(), hours=[0])


class TestGradcheckHarness:
    def test_all_models_pass(self):
        results = run_gradcheck(seed=0)
        assert [name for name, _ in results] == list(GRADCHECK_MODELS)
        for name, report in results:
            assert report.passed, f"{name}: {report.max_rel_error:.3e}"

    def test_fault_injection_fails_everywhere(self):
        for name, report in run_gradcheck(seed=0, inject_fault=True):
            assert not report.passed, name
