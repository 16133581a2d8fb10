# tests/test_pipeline.py
import pandas as pd
import pytest

from src.config import Config, ExperimentConfig, load_config
from src.main import main
from src.processors import BatchPipeline
from src.processors.pipeline.artifacts import ArtifactStore, derived_seed
from src.utils import JsonHandler, Log, file_sha256, log_lifecycle, measure_time
from src.utils.exceptions import ConfigError, MissingArtifactError


def small_config(**overrides) -> ExperimentConfig:
    cfg = load_config(None).with_overrides(
        synthetic={"n_transformers": 6, "n_days": 80, "start_date": "2024-10-01"},
        split={"train_validation_days": 55, "holdout_days": 20},
        clustering={"k_range": (2, 3), "n_init": 2, "selection_rounds": 10},
        forecaster={"n_rounds": 20, "min_rows": 20, "validation_days": 7, "multi_temp_replicas": 2,
                    "min_leaf_rows": 10},
        evaluation={"sensitivity_days": 1, "sensitivity_grid": (0.0, 10.0, 5.0)},
    )
    return cfg.with_overrides(**overrides) if overrides else cfg


# ==========================================
# Configuration
# ==========================================
def test_defaults_validate():
    cfg = load_config(None)
    assert cfg.seed == 7
    assert cfg.forecaster.percentiles == (0.02, 0.05, 0.5, 0.95)
    assert cfg.config_hash() == ExperimentConfig().config_hash()


def test_shipped_config_matches_the_defaults():
    assert load_config(Config.DEFAULT_CONFIG).config_hash() == ExperimentConfig().config_hash()


def test_yaml_lists_become_tuples(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("seed: 3\nclustering:\n  k_range: [2, 4]\n", encoding="utf-8")
    cfg = load_config(path)
    assert cfg.seed == 3
    assert cfg.clustering.k_range == (2, 4)
    assert cfg.labeler.k_max == 2.5


@pytest.mark.parametrize("text", [
    "bogus: 1\n",
    "labeler:\n  k_lo: 0.1\n",
    "labeler:\n  k_min: 3.0\n",
    "thermal:\n  tau_winding: 200.0\n",
    "forecaster:\n  percentiles: [0.5, 0.05]\n",
    "evaluation:\n  coverage_interval: [0.1, 0.9]\n",
    "clustering:\n  pipelines: [ridge_umap]\n",
    "seed: abc\n",
    "- just\n- a list\n",
])
def test_bad_config_is_rejected(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_overrides_are_validated():
    cfg = load_config(None)
    assert cfg.with_overrides(seed=11).seed == 11
    assert cfg.with_overrides(seed=11).config_hash() != cfg.config_hash()
    with pytest.raises(ConfigError):
        cfg.with_overrides(window={"offpeak_hours": 10})
    with pytest.raises(ConfigError):
        load_config(Config.BASE_DIR / "missing.yaml")


def test_derived_seeds_are_stable_and_distinct():
    assert derived_seed(7, 1) == derived_seed(7, 1)
    assert len({derived_seed(7, t) for t in range(1, 6)}) == 5
    assert derived_seed(7, 1) != derived_seed(8, 1)


# ==========================================
# CLI exit codes
# ==========================================
def test_missing_upstream_artifact_exits_3(tmp_path):
    assert main(["evaluate", "--output-dir", str(tmp_path), "--quiet"]) == 3
    assert main(["train", "--output-dir", str(tmp_path), "--quiet"]) == 3


def test_bad_config_exits_2(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("labeler:\n  k_min: 3.0\n", encoding="utf-8")
    assert main(["synth", "--config", str(path), "--output-dir", str(tmp_path), "--quiet"]) == 2


def test_conflicting_temperature_flags_are_refused(tmp_path):
    with pytest.raises(SystemExit):
        main(["predict", "--noisy-temp", "--forecast-temp", "--output-dir", str(tmp_path)])


def test_synth_subcommand_writes_the_raw_fleet(tmp_path):
    code = main(["synth", "--output-dir", str(tmp_path), "--n-transformers", "2", "--n-days", "20",
                 "--seed", "5", "--quiet"])
    assert code == 0
    loads = pd.read_csv(tmp_path / Config.RAW_DIR / Config.LOADS_FILE)
    assert loads["transformer_id"].nunique() == 2
    manifest = JsonHandler.read_json(tmp_path / "manifest_synth.json")
    assert manifest["seed"] == 5
    assert f"{Config.RAW_DIR}/{Config.LOADS_FILE}" in manifest["outputs"]


# ==========================================
# Stages
# ==========================================
def test_synth_and_label_are_reproducible(tmp_path):
    cfg = load_config(None).with_overrides(synthetic={"n_transformers": 2, "n_days": 20})
    hashes = []
    for run in ("a", "b"):
        pipeline = BatchPipeline(cfg, tmp_path / run)
        pipeline.synth()
        labels = pipeline.label()
        assert not labels.empty
        features = pd.read_csv(tmp_path / run / Config.FEATURES_FILE)
        assert set(features["transformer_id"]) <= set(labels["transformer_id"])
        hashes.append([file_sha256(tmp_path / run / name)
                       for name in (Config.LABELS_FILE, Config.FEATURES_FILE, Config.DAY_SUMMARY_FILE)])
    assert hashes[0] == hashes[1]

    manifest = JsonHandler.read_json(tmp_path / "a" / "manifest_label.json")
    assert manifest["config_hash"] == cfg.config_hash()
    assert Config.LABELS_FILE in manifest["outputs"]


def test_stage_without_upstream_names_the_producer(tmp_path):
    pipeline = BatchPipeline(load_config(None), tmp_path)
    with pytest.raises(MissingArtifactError, match="synth"):
        pipeline.label()
    with pytest.raises(MissingArtifactError):
        ArtifactStore.require(tmp_path / "nothing.csv")


@pytest.mark.slow
def test_reproduce_is_deterministic(tmp_path):
    cfg = small_config()
    summaries = [BatchPipeline(cfg, tmp_path / run).reproduce() for run in ("a", "b")]
    assert summaries[0] == summaries[1]
    assert {"st_cp", "st_np", "mt_cp", "mt_np", "multistage_cp"} <= set(summaries[0])

    reports = tmp_path / "a" / Config.REPORTS_DIR
    for name in ("report.json", "risk_table.csv", "sensitivity.csv", "pipeline_scores.csv"):
        assert (reports / name).exists()
    assert file_sha256(reports / "report.json") == file_sha256(tmp_path / "b" / Config.REPORTS_DIR / "report.json")

    risk = pd.read_csv(reports / "risk_table.csv").set_index("setting")
    assert "fixed" in risk.index
    assert risk.loc["p5", "exceedance_pct"] <= risk.loc["p95", "exceedance_pct"]


# ==========================================
# Logging
# ==========================================
def test_log_level_gates_output(capsys):
    Log.set_level("warning")
    Log.info("hidden line")
    Log.warning("shown line")
    out = capsys.readouterr().out
    assert "hidden line" not in out and "shown line" in out
    with pytest.raises(ValueError):
        Log.set_level("loud")


def test_failed_stage_is_traced(capsys):
    @measure_time
    @log_lifecycle
    def broken_stage():
        raise MissingArtifactError("nothing upstream")

    Log.set_level("trace")
    with pytest.raises(MissingArtifactError):
        broken_stage()
    out = capsys.readouterr().out
    assert "Starting: test_failed_stage_is_traced.<locals>.broken_stage" in out
    assert "Failed:" in out and "MissingArtifactError" in out
    assert "[Perf]" in out
