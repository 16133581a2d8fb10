# tests/test_reference_run.py
"""End-to-end checks on the default configuration (50 transformers, 183 days, seed 7)."""
import time
from types import SimpleNamespace

import pandas as pd
import pytest

from src.config import Config, load_config
from src.processors import BatchPipeline
from src.utils import file_sha256

pytestmark = pytest.mark.slow

RUNTIME_BUDGET_SECONDS = 600.0


@pytest.fixture(scope="module")
def reference_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("reference_a")
    started = time.perf_counter()
    summary = BatchPipeline(load_config(None), root).reproduce()
    return SimpleNamespace(root=root, summary=summary, elapsed=time.perf_counter() - started)


@pytest.fixture(scope="module")
def repeated_run(tmp_path_factory, reference_run):
    root = tmp_path_factory.mktemp("reference_b")
    BatchPipeline(load_config(None), root).reproduce()
    return root


@pytest.fixture(scope="module")
def risk(reference_run):
    return pd.read_csv(reference_run.root / Config.REPORTS_DIR / "risk_table.csv").set_index("setting")


@pytest.fixture(scope="module")
def direct_predictions(reference_run):
    root = reference_run.root
    dtype = {"transformer_id": str, "date": str}
    predictions = pd.read_csv(root / Config.PREDICTIONS_DIR / "st_cp.csv", dtype=dtype)
    labels = pd.read_csv(root / Config.LABELS_FILE, dtype=dtype)[["transformer_id", "date", "k_opt"]]
    return predictions.merge(labels, on=["transformer_id", "date"], how="inner", validate="many_to_one")


# ==========================================
# Runtime and determinism
# ==========================================
def test_reproduce_fits_the_runtime_budget(reference_run):
    assert reference_run.elapsed <= RUNTIME_BUDGET_SECONDS


def test_report_files_are_byte_identical(reference_run, repeated_run):
    first = sorted(p.name for p in (reference_run.root / Config.REPORTS_DIR).iterdir())
    second = sorted(p.name for p in (repeated_run / Config.REPORTS_DIR).iterdir())
    assert first == second and "report.json" in first
    for name in first:
        assert file_sha256(reference_run.root / Config.REPORTS_DIR / name) == \
            file_sha256(repeated_run / Config.REPORTS_DIR / name), name


# ==========================================
# Coverage
# ==========================================
def test_clean_coverage_is_near_nominal(reference_run):
    assert 85.0 <= reference_run.summary["st_cp"] <= 95.0


def test_noisy_temperatures_cost_at_most_five_points(reference_run):
    assert reference_run.summary["st_np"] >= reference_run.summary["st_cp"] - 5.0


def test_multistage_covers_far_less_than_direct(reference_run):
    assert reference_run.summary["multistage_cp"] <= reference_run.summary["st_cp"] - 20.0


# ==========================================
# Risk trade-off
# ==========================================
@pytest.mark.parametrize("setting, percentile", [("p5", 5.0), ("p50", 50.0), ("p95", 95.0)])
def test_exceedance_tracks_the_percentile(risk, setting, percentile):
    assert abs(risk.at[setting, "exceedance_pct"] - percentile) <= 7.0


def test_risk_and_capacity_rise_with_the_percentile(risk):
    ordered = risk.loc[["p2", "p5", "p50", "p95"]]
    assert ordered["exceedance_pct"].is_monotonic_increasing
    assert ordered["mean_capacity_pu"].is_monotonic_increasing


def test_low_percentile_beats_the_fixed_factor(risk):
    assert risk.at["fixed", "exceedance_pct"] == 0.0
    assert risk.at["p2", "mean_capacity_pu"] >= 1.05 * risk.at["fixed", "mean_capacity_pu"]


# ==========================================
# Forecaster calibration
# ==========================================
def test_median_forecast_splits_the_days(direct_predictions):
    median = direct_predictions[direct_predictions["percentile"] == 0.5]
    assert 0.40 <= (median["k_pred"] > median["k_opt"]).mean() <= 0.60


@pytest.mark.parametrize("q", [0.05, 0.5, 0.95])
def test_labels_fall_below_the_prediction_at_rate_q(direct_predictions, q):
    rows = direct_predictions[direct_predictions["percentile"] == q]
    assert abs((rows["k_opt"] < rows["k_pred"]).mean() - q) <= 0.07
