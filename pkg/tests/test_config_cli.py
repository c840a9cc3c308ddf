"""YAML config building and the command line surface.

CLI tests call main() in process and assert on exit codes, captured output,
and the files left behind.
"""

import json
import warnings

import pytest
import yaml

from pdd.cli import main
from pdd.config import SweepSpec, build_experiment, load_config
from pdd.data import load_dataset
from pdd.errors import ConfigError
from pdd.policy import schedule_read


def minimal_raw(**overrides):
    raw = {
        "seed": 3,
        "variant": "srd",
        "epochs": 4,
        "revision_epochs": 1,
        "gamma": 0.8,
        "data": {"synthetic": {"classes": 3, "per_class": 20, "dims": 5,
                               "spread": 0.05, "test_per_class": 10}},
    }
    raw.update(overrides)
    return raw


def write_config(tmp_path, raw, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return path


class TestBuildExperiment:
    def test_minimal_defaults(self, tmp_path):
        exp = build_experiment(minimal_raw(), tmp_path)
        assert exp.run.seed == 3
        assert exp.run.batch_size == 32
        assert exp.run.hidden == (128, 64)
        assert exp.run.optimizer.kind == "adamw"
        assert exp.run.optimizer.learning_rate == 3e-4
        assert exp.output_dir is None
        assert exp.figures and exp.histogram
        assert exp.sweep is None

    def test_unknown_keys_named_at_every_level(self, tmp_path):
        cases = [
            minimal_raw(typo=1),
            minimal_raw(optimizer={"learning_rate": 0.1}),  # the key is 'lr'
            minimal_raw(variant="analytic", gamma=None,
                        decay={"fn": "power-law", "alpha": 1.0, "beta": 2}),
            minimal_raw(data={"synthetic": {"classes": 2, "per_class": 5, "blur": 1}}),
            minimal_raw(data={"idx": {"train_images": "a", "train_labels": "b",
                                      "test_images": "c", "test_labels": "d",
                                      "extra": "e"}}),
            minimal_raw(sweep={"taus": [0.1]}),
        ]
        for raw in cases:
            raw = {k: v for k, v in raw.items() if v is not None}
            with pytest.raises(ConfigError, match="unknown key"):
                build_experiment(raw, tmp_path)

    def test_missing_required_keys(self, tmp_path):
        for key in ("seed", "variant", "epochs", "data"):
            raw = minimal_raw()
            del raw[key]
            with pytest.raises(ConfigError, match=key):
                build_experiment(raw, tmp_path)

    def test_bool_is_not_an_integer(self, tmp_path):
        with pytest.raises(ConfigError, match="seed"):
            build_experiment(minimal_raw(seed=True), tmp_path)

    def test_data_needs_exactly_one_source(self, tmp_path):
        raw = minimal_raw()
        raw["data"] = {}
        with pytest.raises(ConfigError, match="exactly one"):
            build_experiment(raw, tmp_path)
        raw["data"] = {"synthetic": {"classes": 2, "per_class": 5},
                       "idx": {"train_images": "a", "train_labels": "b",
                               "test_images": "c", "test_labels": "d"}}
        with pytest.raises(ConfigError, match="exactly one"):
            build_experiment(raw, tmp_path)

    def test_relative_paths_resolve_against_config_dir(self, tmp_path):
        raw = minimal_raw(output_dir="results")
        exp = build_experiment(raw, tmp_path / "sub")
        assert exp.output_dir == tmp_path / "sub" / "results"

    def test_schedule_file_resolves_and_loads(self, tmp_path):
        (tmp_path / "sched.csv").write_text("epoch,retained\n1,30\n2,60\n")
        raw = minimal_raw(variant="smrd-replay", epochs=2, revision_epochs=0,
                          schedule_file="sched.csv")
        del raw["gamma"]
        exp = build_experiment(raw, tmp_path)
        assert exp.run.policy.schedule.retained == (30, 60)

    def test_overrides_replace_policy_and_drop_sweep(self, tmp_path):
        raw = minimal_raw(variant="smrd-inline", tau=0.3,
                          sweep={"tau": [0.1, 0.2]})
        del raw["gamma"]
        exp = build_experiment(raw, tmp_path)
        sub = exp.with_overrides(tau=0.5, epochs=9)
        assert sub.run.policy.tau == 0.5
        assert sub.run.policy.epochs == 9
        assert sub.sweep is None
        assert exp.run.policy.tau == 0.3  # original untouched

    def test_echo_drops_unused_fields(self, tmp_path):
        echo = build_experiment(minimal_raw(), tmp_path).echo()
        assert echo["gamma"] == 0.8
        assert "tau" not in echo and "loss_threshold" not in echo
        assert echo["data"] == {"synthetic": {"classes": 3, "per_class": 20,
                                              "dims": 5, "spread": 0.05,
                                              "seed": 0, "test_per_class": 10}}

    def test_sweep_points_sorted(self):
        axes = SweepSpec(tau=(0.5, 0.1), epochs=(30, 10))
        assert axes.points() == [
            {"tau": 0.1, "epochs": 10}, {"tau": 0.1, "epochs": 30},
            {"tau": 0.5, "epochs": 10}, {"tau": 0.5, "epochs": 30},
        ]

    def test_load_config_rejects_bad_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("variant: [unclosed")
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(path)
        path.write_text("- just\n- a list\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)


def train_raw(**overrides):
    raw = minimal_raw(output_dir="out", batch_size=16, hidden=[8])
    raw.update(overrides)
    return raw


class TestTrainCommand:
    def test_end_to_end_artifacts(self, tmp_path, capsys):
        cfg = write_config(tmp_path, train_raw())
        assert main(["train", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "effective_epochs = " in out
        assert "final_accuracy = " in out
        outdir = tmp_path / "out"
        metrics = (outdir / "metrics.csv").read_text().splitlines()
        assert metrics[0] == "epoch,retained,backprop_cum,train_loss,test_acc"
        assert len(metrics) == 5  # header + one row per epoch
        summary = json.loads((outdir / "summary.json").read_text())
        assert set(summary) == {"effective_epochs", "final_accuracy", "config"}
        assert summary["config"]["variant"] == "srd"
        hist = (outdir / "histogram.csv").read_text().splitlines()
        assert hist[0] == "sample_id,backprop_count"
        assert len(hist) == 61  # header + one row per training sample
        for name in ("training_curves.png", "retained_schedule.png",
                     "backprop_histogram.png"):
            assert (outdir / name).stat().st_size > 0

    def test_refuses_nonempty_dir_without_force(self, tmp_path, capsys):
        cfg = write_config(tmp_path, train_raw())
        assert main(["train", str(cfg)]) == 0
        assert main(["train", str(cfg)]) == 2
        assert "--force" in capsys.readouterr().err
        assert main(["train", str(cfg), "--force"]) == 0

    def test_no_figures_flag(self, tmp_path):
        cfg = write_config(tmp_path, train_raw())
        assert main(["train", str(cfg), "--no-figures"]) == 0
        outdir = tmp_path / "out"
        assert not list(outdir.glob("*.png"))
        assert (outdir / "metrics.csv").exists()

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg_a = write_config(tmp_path, train_raw(output_dir="a"), name="a.yaml")
        cfg_b = write_config(tmp_path, train_raw(output_dir="b"), name="b.yaml")
        assert main(["train", str(cfg_a), "--no-figures"]) == 0
        assert main(["train", str(cfg_b), "--no-figures"]) == 0
        for name in ("metrics.csv", "summary.json", "histogram.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, name

    def test_dbpd_run_writes_replayable_schedule(self, tmp_path):
        raw = train_raw(variant="dbpd", tau=0.5)
        del raw["gamma"]
        cfg = write_config(tmp_path, raw)
        assert main(["train", str(cfg), "--no-figures"]) == 0
        record = schedule_read(tmp_path / "out" / "schedule.csv")
        assert record.epochs == 4
        assert record.retained[-1] == record.n == 60

    def test_seed_env_override(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, train_raw())
        monkeypatch.setenv("PDD_SEED", "99")
        assert main(["train", str(cfg), "--no-figures"]) == 0
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["config"]["seed"] == 99

    def test_seed_env_invalid(self, tmp_path, monkeypatch, capsys):
        cfg = write_config(tmp_path, train_raw())
        monkeypatch.setenv("PDD_SEED", "ninety")
        assert main(["train", str(cfg)]) == 2
        assert "PDD_SEED" in capsys.readouterr().err

    def test_divergence_exits_three(self, tmp_path, capsys):
        raw = train_raw(variant="baseline", epochs=1, revision_epochs=0,
                        optimizer={"kind": "sgd-momentum", "lr": 1e200})
        del raw["gamma"]
        cfg = write_config(tmp_path, raw)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            assert main(["train", str(cfg)]) == 3
        assert "non-finite loss" in capsys.readouterr().err

    def test_config_error_exits_two(self, tmp_path, capsys):
        cfg = write_config(tmp_path, train_raw(gamma=2.5))
        assert main(["train", str(cfg)]) == 2
        assert "error:" in capsys.readouterr().err


class TestDryRunCommand:
    def test_srd_prints_schedule_and_total(self, capsys):
        assert main(["dry-run", "--variant", "srd", "--gamma", "0.5",
                     "--epochs", "4", "--revision", "1", "--n", "100"]) == 0
        out = capsys.readouterr().out
        assert "epoch,retained" in out
        assert "1,50" in out and "4,100" in out
        assert "effective_epochs = " in out

    def test_gamma_must_sit_inside_open_interval(self, capsys):
        assert main(["dry-run", "--variant", "srd", "--gamma", "1.0",
                     "--epochs", "4", "--n", "100"]) == 2
        assert "(0, 1)" in capsys.readouterr().err

    def test_analytic_hand_schedule(self, capsys):
        assert main(["dry-run", "--variant", "analytic", "--fn", "power-law",
                     "--alpha", "1.0", "--epochs", "4", "--n", "100"]) == 0
        out = capsys.readouterr().out
        for line in ("1,100", "2,50", "3,33", "4,100"):
            assert line in out
        assert "effective_epochs = 2.83" in out

    def test_long_schedules_print_truncated(self, capsys):
        assert main(["dry-run", "--variant", "srd", "--gamma", "0.99",
                     "--epochs", "100", "--n", "1000"]) == 0
        out = capsys.readouterr().out
        assert "... (88 more epochs)" in out
        assert "100,1000" in out
        assert "50," not in out  # middle epochs are elided

    def test_write_schedule_then_replay(self, tmp_path, capsys):
        sched = tmp_path / "s.csv"
        assert main(["dry-run", "--variant", "srd", "--gamma", "0.6",
                     "--epochs", "5", "--n", "200",
                     "--write-schedule", str(sched)]) == 0
        first = capsys.readouterr().out
        record = schedule_read(sched)
        assert record.epochs == 5 and record.n == 200
        assert main(["dry-run", "--variant", "smrd-replay",
                     "--schedule", str(sched)]) == 0
        second = capsys.readouterr().out
        line = next(l for l in first.splitlines() if l.startswith("effective_epochs"))
        assert line in second

    def test_plot_written(self, tmp_path, capsys):
        fig = tmp_path / "sched.png"
        assert main(["dry-run", "--variant", "srd", "--gamma", "0.5",
                     "--epochs", "4", "--n", "100", "--plot", str(fig)]) == 0
        assert fig.stat().st_size > 0

    def test_missing_flags(self, capsys):
        assert main(["dry-run", "--variant", "srd", "--epochs", "4", "--n", "10"]) == 2
        assert main(["dry-run", "--variant", "analytic", "--epochs", "4", "--n", "10"]) == 2
        assert main(["dry-run", "--variant", "smrd-replay"]) == 2
        capsys.readouterr()


class TestSweepCommand:
    def test_tau_axis_end_to_end(self, tmp_path, capsys):
        raw = train_raw(variant="smrd-inline", tau=0.3, epochs=3,
                        sweep={"tau": [0.5, 0.2]})
        del raw["gamma"]
        cfg = write_config(tmp_path, raw)
        assert main(["sweep", str(cfg)]) == 0
        capsys.readouterr()
        outdir = tmp_path / "out"
        lines = (outdir / "sweep.csv").read_text().splitlines()
        assert lines[0] == "axis_values,effective_epochs,final_acc"
        assert lines[1].startswith("tau=0.2,")
        assert lines[2].startswith("tau=0.5,")
        assert (outdir / "sweep.png").stat().st_size > 0
        for sub in ("tau-0.2", "tau-0.5"):
            assert (outdir / sub / "metrics.csv").exists()
            summary = json.loads((outdir / sub / "summary.json").read_text())
            assert summary["config"]["tau"] == float(sub.split("-")[1])

    def test_sweep_requires_section(self, tmp_path, capsys):
        cfg = write_config(tmp_path, train_raw())
        assert main(["sweep", str(cfg)]) == 2
        assert "sweep" in capsys.readouterr().err


class TestGenDataCommand:
    def test_writes_loadable_pair(self, tmp_path, capsys):
        out = tmp_path / "ds"
        args = ["gen-data", "--classes", "3", "--per-class", "12", "--dims", "5",
                "--spread", "0.1", "--seed", "4", "--test-per-class", "6",
                "--out", str(out)]
        assert main(args) == 0
        capsys.readouterr()
        train = load_dataset(out / "train-images.idx", out / "train-labels.idx")
        test = load_dataset(out / "test-images.idx", out / "test-labels.idx")
        assert train.n == 36 and test.n == 18
        assert train.num_classes == 3 and train.dims == 5

    def test_deterministic_bytes(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["gen-data", "--classes", "2", "--per-class", "8",
                         "--dims", "4", "--out", str(out)]) == 0
        capsys.readouterr()
        for name in ("train-images.idx", "train-labels.idx",
                     "test-images.idx", "test-labels.idx"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_refuses_nonempty_dir(self, tmp_path, capsys):
        out = tmp_path / "ds"
        out.mkdir()
        (out / "stale.txt").write_text("x")
        assert main(["gen-data", "--classes", "2", "--per-class", "4",
                     "--out", str(out)]) == 2
        assert main(["gen-data", "--classes", "2", "--per-class", "4",
                     "--out", str(out), "--force"]) == 0
        capsys.readouterr()


class TestScheduleCheckCommand:
    def test_valid_file(self, tmp_path, capsys):
        path = tmp_path / "s.csv"
        path.write_text("epoch,retained\n1,50\n2,100\n")
        assert main(["schedule", "check", str(path)]) == 0
        out = capsys.readouterr().out
        assert "epochs = 2" in out
        assert "dataset_size = 100" in out
        assert "effective_epochs = 1.5" in out

    def test_missing_revision_diagnosed(self, tmp_path, capsys):
        path = tmp_path / "s.csv"
        path.write_text("epoch,retained\n1,50\n2,60\n")
        assert main(["schedule", "check", str(path), "--n", "100"]) == 2
        assert "missing revision epoch" in capsys.readouterr().err
