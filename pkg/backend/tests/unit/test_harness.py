"""Configuration, experiment runners, reports and the command line."""

import json
import os
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from backend.src.anomaly_detector import EXTRA_TREES, LOGISTIC, MODEL_NAMES
from backend.src.data.synthetic import SyntheticSpec, generate_synthetic
from backend.src.detection.forest import RANDOM_FOREST
from backend.src.errors import ConfigError, DataError, TrainingError
from backend.src.harness import config as harness_config
from backend.src.harness import experiments, reports
from backend.src.harness.cli import build_parser, main, overrides_from_args
from backend.src.harness.config import (
    ExperimentConfig,
    load_config,
    parse_label_map,
)
from backend.src.harness.experiments import (
    GaStudy,
    load_dataset,
    run_ablation,
    run_baselines,
    run_ga_study,
)
from backend.src.storage.results_store import ResultsStore

# Small enough that a whole verb runs in a second or two
FAST = {
    "N_TREES": "10",
    "MIN_SAMPLES_LEAF": "3",
    "LOGISTIC_EPOCHS": "100",
    "SYNTH_N_SAMPLES": "300",
    "SYNTH_N_INFORMATIVE": "3",
    "SYNTH_N_REDUNDANT": "2",
    "SYNTH_N_NOISE": "5",
    "GA_POPULATION": "4",
    "GA_GENERATIONS": "1",
    "GA_TOURNAMENT_SIZE": "2",
    "GA_ELITISM": "1",
    "GA_MIN_FEATURES": "2",
    "GA_EVALUATOR_TREES": "5",
    "GA_FINAL_TREES": "5",
    "GA_SEEDS": "1",
}


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """Keep GRIDGA_* variables of the calling shell and a local .env out."""
    monkeypatch.setattr(harness_config, "load_dotenv", lambda: False)
    for key in list(os.environ):
        if key.startswith("GRIDGA_"):
            monkeypatch.delenv(key)


@pytest.fixture
def fast_config():
    def build(**overrides):
        values = dict(FAST)
        values.update({k: str(v) for k, v in overrides.items()})
        return load_config(overrides=values, use_environment=False)

    return build


@pytest.fixture
def config_file(tmp_path):
    def build(values, name="experiment.env"):
        path = tmp_path / name
        path.write_text(
            "".join(f"{key}={value}\n" for key, value in values.items()),
            encoding="utf-8",
        )
        return path

    return build


class TestLoadConfig:
    def test_defaults(self):
        cfg = load_config(use_environment=False)
        assert cfg.uses_synthetic
        assert cfg.models == MODEL_NAMES
        assert cfg.ga_feature_set == "pmu_without_status"
        assert cfg.ga_seeds == (1, 2, 3, 4, 5)
        assert cfg.ga.alpha == 0.95
        assert (cfg.ga.population_size, cfg.ga.generations) == (40, 30)
        assert cfg.ga.evaluator.n_trees == 100
        assert cfg.ga.final_model.n_trees == 300
        assert cfg.settings.forest.n_trees == 300
        assert cfg.split_fractions == (0.70, 0.15, 0.15)
        assert cfg.split_seed == 42

    def test_overrides_beat_file(self, config_file):
        path = config_file({"N_TREES": "50", "GA_ALPHA": "0.9"})
        cfg = load_config(path, {"N_TREES": "20"}, use_environment=False)
        assert cfg.settings.forest.n_trees == 20
        assert cfg.ga.alpha == 0.9

    def test_file_beats_environment(self, config_file, monkeypatch):
        monkeypatch.setenv("GRIDGA_N_TREES", "7")
        monkeypatch.setenv("GRIDGA_GA_POPULATION", "12")
        cfg = load_config(config_file({"N_TREES": "9"}))
        assert cfg.settings.forest.n_trees == 9
        assert cfg.ga.population_size == 12

    def test_environment_ignored_when_disabled(self, monkeypatch):
        monkeypatch.setenv("GRIDGA_N_TREES", "7")
        assert load_config(use_environment=False).settings.forest.n_trees == 300

    def test_none_override_is_ignored(self):
        cfg = load_config(overrides={"N_TREES": None}, use_environment=False)
        assert cfg.settings.forest.n_trees == 300

    def test_parsed_values(self, config_file):
        cfg = load_config(
            config_file(
                {
                    "MODELS": "extra_trees, logistic",
                    "GA_SEEDS": "3,1",
                    "GA_MUTATION_RATE": "auto",
                    "MAX_FEATURES": "none",
                    "GA_FINAL_MODEL": "random_forest",
                    "LABEL_MAP": "bad:1,good:0",
                    "DATA_DIR": "/data/binary",
                }
            ),
            use_environment=False,
        )
        assert cfg.models == (EXTRA_TREES, LOGISTIC)
        assert cfg.ga_seeds == (3, 1)
        assert cfg.ga.mutation_rate is None
        assert cfg.settings.forest.max_features is None
        assert cfg.ga.final_model.mode == RANDOM_FOREST
        assert cfg.label_map == {"bad": 1, "good": 0}
        assert not cfg.uses_synthetic

    @pytest.mark.parametrize(
        "values",
        [
            {"NOT_A_KEY": "1"},
            {"N_TREES": "many"},
            {"N_TREES": "0"},
            {"MODELS": "svm"},
            {"FEATURE_SETS": "everything"},
            {"GA_FEATURE_SET": "pmu"},
            {"SPLIT_FRACTIONS": "0.5,0.5,0.5"},
            {"GA_ALPHA": "0"},
            {"GA_FINAL_MODEL": "logistic"},
            {"LABEL_MAP": "Attack:2"},
            {"N_JOBS": "0"},
            {"SYNTH_CLASS_BALANCE": "1.5"},
        ],
    )
    def test_invalid_values(self, config_file, values):
        with pytest.raises(ConfigError):
            load_config(config_file(values), use_environment=False)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.env", use_environment=False)

    def test_empty_roster(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(models=())

    def test_label_map_text(self):
        assert parse_label_map("Attack:1,Natural:0") == {"Attack": 1, "Natural": 0}
        with pytest.raises(ValueError):
            parse_label_map("Attack")

    def test_echo_is_json(self, fast_config):
        echo = fast_config().to_dict()
        assert json.loads(json.dumps(echo)) == echo
        assert echo["ga"]["population_size"] == 4


class TestCommandLineOverrides:
    def test_seed_drives_split_models_and_synthetic_data(self):
        args = build_parser().parse_args(["baselines", "--seed", "7"])
        overrides = overrides_from_args(args)
        assert overrides["SPLIT_SEED"] == "7"
        assert overrides["MODEL_SEED"] == "7"
        assert overrides["SYNTH_SEED"] == "7"

    def test_feature_set_depends_on_verb(self):
        ga = overrides_from_args(
            build_parser().parse_args(["ga", "--feature-set", "all"])
        )
        baselines = overrides_from_args(
            build_parser().parse_args(["baselines", "--feature-set", "all"])
        )
        assert ga["GA_FEATURE_SET"] == "all"
        assert "FEATURE_SETS" not in ga
        assert baselines["FEATURE_SETS"] == "all"


class TestExperiments:
    def test_baselines_cover_roster_and_feature_sets(self, fast_config):
        rows = run_baselines(fast_config())
        feature_sets = ("all", "pmu_only", "pmu_without_status")
        assert [(r.model, r.feature_set) for r in rows] == sorted(
            (m, s) for m in MODEL_NAMES for s in feature_sets
        )
        for row in rows:
            assert row.n_features == 10
            assert 0.0 <= row.metrics.macro_f1 <= 1.0
        extra = next(r for r in rows if r.model == EXTRA_TREES)
        assert extra.metrics.macro_f1 > 0.8

    def test_logistic_on_no_signal_data(self, fast_config):
        cfg = fast_config(MODELS="logistic", FEATURE_SETS="all")
        ds = generate_synthetic(
            SyntheticSpec(
                n_samples=6000,
                n_informative=0,
                n_redundant=0,
                n_noise=5,
                class_balance=0.5,
                seed=1,
            )
        )
        (row,) = run_baselines(cfg, ds)
        assert row.metrics.balanced_accuracy == pytest.approx(0.5, abs=0.05)

    def test_ablation_is_flat_without_log_or_status_columns(self, fast_config):
        rows = run_ablation(fast_config(MODELS="extra_trees,random_forest,logistic"))
        assert {r.model for r in rows} == {"extra_trees", "random_forest"}
        assert len(rows) == 6
        # Synthetic columns are all PMU measurements, so every set is the same
        for model in ("extra_trees", "random_forest"):
            metrics = {r.metrics for r in rows if r.model == model}
            assert len(metrics) == 1

    def test_ablation_falls_back_to_tree_models(self, fast_config):
        rows = run_ablation(fast_config(MODELS="logistic"))
        assert {r.model for r in rows} == {"extra_trees", "random_forest"}

    def test_missing_data_dir(self, fast_config, tmp_path):
        with pytest.raises(DataError):
            load_dataset(fast_config(DATA_DIR=tmp_path / "absent"))

    def test_no_matching_files(self, fast_config, tmp_path):
        with pytest.raises(DataError):
            load_dataset(fast_config(DATA_DIR=tmp_path))


class TestGaStudy:
    def test_single_seed_study(self, fast_config, tmp_path):
        cfg = fast_config()
        store = ResultsStore(tmp_path)
        study = run_ga_study(cfg, store=store)

        assert study.complete
        assert study.n_features == 10
        assert [run.seed for run in study.runs] == [1]
        assert study.full_feature.n_features == 10
        assert (tmp_path / "ga_history_1.csv").exists()
        selected = (tmp_path / "selected_features_1.txt").read_text().split()
        assert tuple(selected) == study.runs[0].selected_features

        summary = reports.ga_summary(study.runs)
        assert (summary["std"] == 0.0).all()
        table = reports.ga_runs_table(study)
        assert table["seed"].tolist() == ["1", "mean", "std"]
        comparison = reports.comparison_table(study)
        assert comparison["configuration"].tolist() == [
            "full (pmu_without_status)",
            "ga_mean (1 seeds)",
        ]

        kept = reports.selected_summary(study)
        relays = kept[kept["breakdown"] == "relay"].set_index("name")["seed_1"]
        # Synthetic column names carry no relay prefix
        assert relays["other"] == study.runs[0].n_selected
        features = kept[kept["breakdown"] == "feature"]
        assert set(features["name"]) == set(study.runs[0].selected_features)
        assert (features["mean"] == 1.0).all()

        history = pd.read_csv(tmp_path / "ga_history_1.csv")
        assert history.columns.tolist() == [
            "generation",
            "best_J",
            "mean_J",
            "best_popcount",
        ]
        assert history["generation"].tolist() == [0, 1]

    def test_selected_summary_counts(self):
        runs = (
            SimpleNamespace(
                seed=2,
                selected_features=("R1-PM1:V", "R1-PA8:VH", "R2:F", "snort_log1"),
            ),
            SimpleNamespace(seed=1, selected_features=("R1-PM1:V", "R2-PA:ZH", "R4:S")),
        )
        table = reports.selected_summary(GaStudy("all", 128, runs, None))
        assert table.columns.tolist() == [
            "breakdown",
            "name",
            "seed_1",
            "seed_2",
            "mean",
        ]

        relays = table[table["breakdown"] == "relay"].set_index("name")
        assert relays["seed_1"].to_dict() == {
            "R1": 1,
            "R2": 1,
            "R3": 0,
            "R4": 1,
            "other": 0,
        }
        assert relays["seed_2"].to_dict() == {
            "R1": 2,
            "R2": 1,
            "R3": 0,
            "R4": 0,
            "other": 1,
        }
        assert relays.loc["R1", "mean"] == 1.5

        kinds = table[table["breakdown"] == "measurement"].set_index("name")
        assert kinds["seed_1"].to_dict() == {
            "magnitude": 1,
            "angle": 0,
            "sequence": 0,
            "frequency": 0,
            "impedance": 1,
            "status": 1,
            "log": 0,
            "other": 0,
        }
        assert kinds["seed_2"].to_dict() == {
            "magnitude": 1,
            "angle": 0,
            "sequence": 1,
            "frequency": 1,
            "impedance": 0,
            "status": 0,
            "log": 1,
            "other": 0,
        }

        features = table[table["breakdown"] == "feature"]
        assert features["name"].iloc[0] == "R1-PM1:V"
        assert features.set_index("name")["mean"].to_dict() == {
            "R1-PM1:V": 1.0,
            "R1-PA8:VH": 0.5,
            "R2-PA:ZH": 0.5,
            "R2:F": 0.5,
            "R4:S": 0.5,
            "snort_log1": 0.5,
        }

    def test_seeds_run_in_order_with_their_own_config(self, fast_config):
        study = run_ga_study(fast_config(GA_SEEDS="2,1"))
        assert [run.seed for run in study.runs] == [1, 2]

    def test_failed_seed_keeps_finished_runs(self, fast_config, tmp_path, monkeypatch):
        real_run_ga = experiments.run_ga

        def flaky(splits, cfg, evaluator=None):
            if cfg.seed == 2:
                raise TrainingError("boom")
            return real_run_ga(splits, cfg, evaluator)

        monkeypatch.setattr(experiments, "run_ga", flaky)
        store = ResultsStore(tmp_path)
        with pytest.raises(TrainingError, match="GA seed 2"):
            run_ga_study(fast_config(GA_SEEDS="1,2"), store=store)

        saved = GaStudy.from_dict(store.load()["ga"])
        assert not saved.complete
        assert [run.seed for run in saved.runs] == [1]


class TestResultsStore:
    def test_sections_accumulate(self, tmp_path):
        store = ResultsStore(tmp_path)
        store.save_section("baselines", {"rows": []}, {"n_jobs": 1})
        store.save_section("ablation", {"rows": [1]})
        document = store.load()
        assert document["baselines"] == {"rows": []}
        assert document["ablation"] == {"rows": [1]}
        assert document["config"] == {"n_jobs": 1}
        assert "numpy" in document["environment"]

    def test_numpy_values_serialise(self, tmp_path):
        store = ResultsStore(tmp_path)
        store.save_section("x", {"a": np.int64(3), "b": np.float64(0.5)})
        assert store.load()["x"] == {"a": 3, "b": 0.5}

    def test_corrupt_file(self, tmp_path):
        (tmp_path / "results.json").write_text("{not json", encoding="utf-8")
        with pytest.raises(DataError):
            ResultsStore(tmp_path).load()

    def test_table_written_as_csv_and_markdown(self, tmp_path):
        table = pd.DataFrame({"model": ["extra_trees"], "macro_f1": [0.91234567]})
        path = ResultsStore(tmp_path).write_table("t", table)
        assert path.read_text() == "model,macro_f1\nextra_trees,0.912346\n"
        assert "| extra_trees | 0.9123 |" in (tmp_path / "t.md").read_text()


class TestCli:
    def _args(self, config_path, out_dir, *extra):
        return ["--config", str(config_path), "--out", str(out_dir), *extra]

    def test_baselines_rerun_is_byte_identical(self, config_file, tmp_path):
        path = config_file(FAST)
        first, second = tmp_path / "first", tmp_path / "second"
        assert main(["baselines", *self._args(path, first)]) == 0
        assert main(["baselines", *self._args(path, second)]) == 0
        for name in ("baselines.csv", "baselines.md"):
            assert (first / name).read_bytes() == (second / name).read_bytes()
        document = json.loads((first / "results.json").read_text())
        assert {"baselines", "config", "environment", "updated_at"} <= set(document)
        assert "seconds" not in (first / "baselines.csv").read_text()

    def test_report_rerenders_tables(self, config_file, tmp_path):
        path = config_file(FAST)
        out = tmp_path / "out"
        assert main(["ga", *self._args(path, out)]) == 0
        original = {
            name: (out / name).read_bytes()
            for name in (
                "ga_runs.csv",
                "comparison.csv",
                "selected_summary.csv",
                "ga_history_1.csv",
            )
        }
        for name in original:
            (out / name).unlink()
        assert main(["report", *self._args(path, out)]) == 0
        for name, content in original.items():
            assert (out / name).read_bytes() == content

    def test_report_without_results(self, config_file, tmp_path, capsys):
        assert main(["report", *self._args(config_file(FAST), tmp_path)]) == 0
        assert "run an experiment first" in capsys.readouterr().out

    def test_synth_writes_loadable_files(self, config_file, tmp_path):
        out = tmp_path / "synthetic"
        assert main(["synth", *self._args(config_file(FAST), out)]) == 0
        assert (out / "synthetic.csv").exists()

        values = dict(FAST, MANIFEST=str(out / "synthetic_manifest.env"))
        path = config_file(values, name="real.env")
        results = tmp_path / "results"
        code = main(
            [
                "baselines",
                *self._args(path, results),
                "--data-dir",
                str(out),
                "--models",
                "extra_trees",
            ]
        )
        assert code == 0
        table = pd.read_csv(results / "baselines.csv")
        assert table["n_features"].tolist() == [10, 10, 10]

    def test_config_error_exit_code(self, config_file, tmp_path, capsys):
        path = config_file({"NOT_A_KEY": "1"})
        assert main(["baselines", *self._args(path, tmp_path)]) == 2
        assert capsys.readouterr().out.startswith("❌ ERROR:")

    def test_unknown_model_exit_code(self, config_file, tmp_path):
        args = self._args(config_file(FAST), tmp_path)
        assert main(["baselines", *args, "--models", "svm"]) == 2

    def test_data_error_exit_code(self, config_file, tmp_path):
        args = self._args(config_file(FAST), tmp_path)
        assert main(["baselines", *args, "--data-dir", str(tmp_path / "none")]) == 3

    @pytest.mark.parametrize(
        "content", [b"", b"R1:F,marker\n\xff\xfe,Attack\n"], ids=["empty", "utf8"]
    )
    def test_unreadable_csv_exit_code(self, config_file, tmp_path, capsys, content):
        data_dir = tmp_path / "data"
        data_dir.mkdir()
        (data_dir / "data1.csv").write_bytes(content)
        args = self._args(config_file(FAST), tmp_path / "out")
        assert main(["baselines", *args, "--data-dir", str(data_dir)]) == 3
        assert "data1.csv" in capsys.readouterr().out

    def test_undefined_metric_exit_code(self, config_file, tmp_path):
        # 20 attack and 3 natural rows leave the test part with no natural row
        values = dict(FAST, SYNTH_N_SAMPLES="23", SYNTH_CLASS_BALANCE="0.87")
        args = self._args(config_file(values), tmp_path)
        assert main(["baselines", *args, "--models", "extra_trees"]) == 4

    def test_seed_flag_changes_split(self, config_file, tmp_path):
        path = config_file(FAST)
        assert main(["baselines", *self._args(path, tmp_path / "a")]) == 0
        code = main(["baselines", *self._args(path, tmp_path / "b"), "--seed", "9"])
        assert code == 0
        document = json.loads((tmp_path / "b" / "results.json").read_text())
        assert document["config"]["split_seed"] == 9
        assert document["config"]["synthetic"]["seed"] == 9


def test_experiment_config_is_immutable(fast_config):
    cfg = fast_config()
    changed = replace(cfg, split_seed=1)
    assert cfg.split_seed == 42 and changed.split_seed == 1
