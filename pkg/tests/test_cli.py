"""CLI behavior: exit codes, artifacts, config precedence, determinism."""

import hashlib

import pytest

from chargecast.cli import (
    DEFAULT_SWEEP_HOURS,
    main,
    read_config_file,
    write_effective_config,
    _GENERATE_KEYS,
    _RUN_KEYS,
    _parse_bool,
    _parse_hours_list,
)
from chargecast.errors import UsageError


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "occ.csv"
    rc = main(
        [
            "generate",
            "--out",
            str(path),
            "--stations",
            "2",
            "--weeks",
            "3",
            "--target-rate",
            "0.15",
            "--seed",
            "7",
        ]
    )
    assert rc == 0
    return path


def _train_args(dataset, out, model="logreg", **overrides):
    flags = {
        "input-hours": "1",
        "output-hours": "1",
        "hidden": "3",
        "epochs": "2",
        "test-weeks": "1",
        "train-stride": "50",
        "eval-stride": "50",
    }
    flags.update({k.replace("_", "-"): str(v) for k, v in overrides.items()})
    argv = ["train", "--data", str(dataset), "--out", str(out), "--model", model]
    for key, value in flags.items():
        argv += [f"--{key}", value]
    return argv


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestParsingHelpers:
    def test_parse_bool(self):
        assert _parse_bool("true") and _parse_bool("1") and _parse_bool("YES")
        assert not _parse_bool("false") and not _parse_bool("0") and not _parse_bool("No")
        with pytest.raises(UsageError):
            _parse_bool("maybe")

    def test_parse_hours_list(self):
        assert _parse_hours_list("8,12,16") == (8, 12, 16)
        assert _parse_hours_list("4") == (4,)
        with pytest.raises(UsageError):
            _parse_hours_list("a,b")
        with pytest.raises(UsageError):
            _parse_hours_list(",")

    def test_config_file_round_trip(self, tmp_path):
        settings = {
            "model": "dfds",
            "seed": 3,
            "lr": 0.001,
            "weekday_profiles": True,
            "epochs": 20,
        }
        path = tmp_path / "run.cfg"
        write_effective_config(settings, path)
        back = read_config_file(path, _RUN_KEYS)
        assert back == settings

    def test_config_file_comments_and_blanks(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# a comment\n\nseed=4  # trailing comment\n")
        assert read_config_file(path, _RUN_KEYS) == {"seed": 4}

    def test_config_file_unknown_key(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("momentum=0.9\n")
        with pytest.raises(UsageError, match="run.cfg:1"):
            read_config_file(path, _RUN_KEYS)

    def test_config_file_bad_line(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed\n")
        with pytest.raises(UsageError, match="key=value"):
            read_config_file(path, _RUN_KEYS)

    def test_config_file_bad_value(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed=abc\n")
        with pytest.raises(UsageError, match="bad value"):
            read_config_file(path, _RUN_KEYS)


class TestGenerate:
    def test_deterministic_output(self, tmp_path):
        paths = [tmp_path / f"{k}.csv" for k in "ab"]
        for p in paths:
            argv = ["generate", "--out", str(p), "--stations", "1", "--weeks", "1", "--seed", "3"]
            assert main(argv) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("stations=1\nweeks=1\nseed=5\n")
        out = tmp_path / "out.csv"
        rc = main(["generate", "--out", str(out), "--config", str(cfg), "--seed", "6"])
        assert rc == 0
        direct = tmp_path / "direct.csv"
        main(["generate", "--out", str(direct), "--stations", "1", "--weeks", "1", "--seed", "6"])
        assert out.read_bytes() == direct.read_bytes()

    def test_unachievable_target_is_data_error(self, tmp_path, capsys):
        rc = main(
            [
                "generate",
                "--out",
                str(tmp_path / "x.csv"),
                "--stations",
                "1",
                "--weeks",
                "1",
                "--target-rate",
                "0.99",
            ]
        )
        assert rc == 2
        assert "data error" in capsys.readouterr().err

    def test_generate_keys(self):
        assert set(_GENERATE_KEYS) == {"stations", "weeks", "target_rate", "dwell", "seed"}


class TestTrain:
    def test_artifacts_and_determinism(self, dataset, tmp_path):
        outs = [tmp_path / k for k in "ab"]
        for out in outs:
            assert main(_train_args(dataset, out)) == 0
            for name in (
                "model.ckpt",
                "profiles.csv",
                "effective_config.txt",
                "training_log.csv",
                "loss_curve.png",
            ):
                assert (out / name).exists(), name
        assert _sha(outs[0] / "model.ckpt") == _sha(outs[1] / "model.ckpt")
        assert _sha(outs[0] / "training_log.csv") == _sha(outs[1] / "training_log.csv")

    def test_havg_has_no_training_log(self, dataset, tmp_path):
        out = tmp_path / "havg"
        assert main(_train_args(dataset, out, model="havg")) == 0
        assert (out / "model.ckpt").exists()
        assert not (out / "training_log.csv").exists()
        assert not (out / "loss_curve.png").exists()

    def test_effective_config_reproduces_run(self, dataset, tmp_path):
        first = tmp_path / "first"
        assert main(_train_args(dataset, first, model="logreg", seed=9)) == 0
        second = tmp_path / "second"
        rc = main(
            [
                "train",
                "--data",
                str(dataset),
                "--out",
                str(second),
                "--config",
                str(first / "effective_config.txt"),
            ]
        )
        assert rc == 0
        assert (first / "effective_config.txt").read_bytes() == (
            second / "effective_config.txt"
        ).read_bytes()
        assert _sha(first / "model.ckpt") == _sha(second / "model.ckpt")

    def test_missing_data_file(self, tmp_path, capsys):
        rc = main(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "data error" in capsys.readouterr().err

    def test_duplicate_records_warn(self, tmp_path, capsys):
        src = tmp_path / "dup.csv"
        main(["generate", "--out", str(src), "--stations", "1", "--weeks", "2", "--seed", "1"])
        lines = src.read_text().splitlines()
        src.write_text("\n".join(lines + lines[1:4]) + "\n")
        out = tmp_path / "out"
        rc = main(_train_args(src, out, model="havg"))
        assert rc == 0
        assert "duplicate" in capsys.readouterr().err

    def test_unknown_model_is_usage_error(self, dataset, tmp_path, capsys):
        rc = main(
            ["train", "--data", str(dataset), "--out", str(tmp_path / "o"), "--model", "rnnx"]
        )
        assert rc == 1


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    assert main(_train_args(dataset, out, model="logreg", input_hours=2)) == 0
    return out


class TestEvaluate:
    def test_artifacts_and_summary(self, dataset, trained, tmp_path, capsys):
        out = tmp_path / "eval"
        rc = main(
            [
                "evaluate",
                "--data",
                str(dataset),
                "--checkpoint",
                str(trained / "model.ckpt"),
                "--out",
                str(out),
                "--test-weeks",
                "1",
                "--eval-stride",
                "50",
            ]
        )
        assert rc == 0
        captured = capsys.readouterr()
        assert "macro precision" in captured.out
        for name in ("metrics.csv", "metrics.png", "effective_config.txt"):
            assert (out / name).exists(), name
        header = (out / "metrics.csv").read_text().splitlines()[0]
        assert header == "test_set,precision,recall,f1,tp,fp,fn,tn"

    def test_adopts_checkpoint_horizons(self, dataset, trained, tmp_path):
        out = tmp_path / "adopt"
        rc = main(
            [
                "evaluate",
                "--data",
                str(dataset),
                "--checkpoint",
                str(trained / "model.ckpt"),
                "--out",
                str(out),
                "--test-weeks",
                "1",
                "--eval-stride",
                "50",
            ]
        )
        assert rc == 0
        text = (out / "effective_config.txt").read_text()
        assert "input_hours=2" in text
        assert "output_hours=1" in text

    def test_explicit_horizon_mismatch(self, dataset, trained, tmp_path, capsys):
        rc = main(
            [
                "evaluate",
                "--data",
                str(dataset),
                "--checkpoint",
                str(trained / "model.ckpt"),
                "--out",
                str(tmp_path / "x"),
                "--input-hours",
                "4",
            ]
        )
        assert rc == 2
        assert "horizon mismatch" in capsys.readouterr().err

    def test_missing_checkpoint(self, dataset, tmp_path):
        rc = main(
            [
                "evaluate",
                "--data",
                str(dataset),
                "--checkpoint",
                str(tmp_path / "ghost.ckpt"),
                "--out",
                str(tmp_path / "x"),
            ]
        )
        assert rc == 2


class TestAblateAndSweep:
    def test_ablate_writes_table(self, dataset, tmp_path):
        out = tmp_path / "ablate"
        argv = _train_args(dataset, out, model="dfds")
        argv[0] = "ablate"
        assert main(argv) == 0
        lines = (out / "ablation.csv").read_text().splitlines()
        assert lines[0] == "variant,precision,recall,f1,delta_precision_pp,delta_recall_pp,delta_f1_pp"
        assert len(lines) == 10
        assert lines[1].startswith("full,")
        assert (out / "ablation.png").exists()

    def test_ablate_rejects_other_models(self, dataset, tmp_path):
        argv = _train_args(dataset, tmp_path / "x", model="knn")
        argv[0] = "ablate"
        assert main(argv) == 1

    def test_sweep_rows_and_round_trip(self, dataset, tmp_path):
        out = tmp_path / "sweep"
        argv = _train_args(dataset, out, model="logreg")
        argv[0] = "sweep"
        argv += ["--hours", "1,2"]
        assert main(argv) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "input_hours,i,precision,recall,f1"
        assert [line.split(",")[0] for line in lines[1:]] == ["1", "2"]
        assert (out / "sweep.png").exists()
        assert "hours=1,2" in (out / "effective_config.txt").read_text()

    def test_sweep_default_hours(self):
        assert DEFAULT_SWEEP_HOURS == (8, 12, 16, 24)

    def test_sweep_bad_hours(self, dataset, tmp_path):
        argv = ["sweep", "--data", str(dataset), "--out", str(tmp_path / "x"), "--hours", "x"]
        assert main(argv) == 1


class TestGradcheckCommand:
    def test_passes_and_reports(self, tmp_path, capsys):
        out = tmp_path / "g"
        rc = main(["gradcheck", "--seed", "0", "--out", str(out)])
        assert rc == 0
        captured = capsys.readouterr()
        assert captured.out.count("PASS") == 4
        lines = (out / "gradcheck.csv").read_text().splitlines()
        assert lines[0].startswith("model,status,max_rel_error")
        assert len(lines) == 5

    def test_fault_injection_exit_code(self, capsys):
        rc = main(["gradcheck", "--seed", "0", "--inject-fault"])
        assert rc == 3
        captured = capsys.readouterr()
        assert "FAIL" in captured.out
        assert "numerical failure" in captured.err


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["analyze"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_missing_required_flag(self, capsys):
        assert main(["train", "--data", "x.csv"]) == 1

    def test_unknown_config_key_exit(self, dataset, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("optimizer=sgd\n")
        rc = main(
            ["train", "--data", str(dataset), "--out", str(tmp_path / "o"), "--config", str(cfg)]
        )
        assert rc == 1
        assert "unknown config key" in capsys.readouterr().err
