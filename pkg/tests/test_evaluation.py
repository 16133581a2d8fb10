# tests/test_evaluation.py
import json
from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest

from src.processors.evaluation.metrics import (
    FIXED_SETTING,
    capacity_pu,
    central_difference,
    coverage,
    evaluate_predictions,
    interval_frame,
    noisy_temperature_run,
    per_transformer_coverage,
    realised_outcome,
    risk_table,
    outcome_frame,
    sensitivity_days,
    sensitivity_summary,
    temperature_sensitivity,
)
from src.processors.evaluation.reports import coverage_histogram, write_reports
from src.processors.physics.labeler import SearchBounds, hotspot_at_k, optimal_scale_factor
from src.utils.exceptions import DataValidationError

START = date(2025, 1, 6)


@pytest.fixture
def scenario(make_inputs):
    """Two transformers over four days: day inputs, true labels and p5/p95 predictions."""
    day_inputs, labels, preds = {}, [], []
    for t, tid in enumerate(("T001", "T002")):
        for d in range(4):
            day = START + timedelta(days=d)
            inputs = make_inputs(offpeak=0.6 + 0.05 * t, peak=(1.0, 0.9, 0.95), ambient=2.0 * d, tid=tid, day=day)
            day_inputs[(tid, day)] = inputs
            k = optimal_scale_factor(inputs).k_opt
            labels.append({"transformer_id": tid, "date": day.isoformat(), "k_opt": k})
            # T002 misses its last day
            width = -0.01 if (tid == "T002" and d == 3) else 0.05
            preds.append({"transformer_id": tid, "date": day.isoformat(), "percentile": 0.05,
                          "k_pred": k + 0.02 if width < 0 else k - width, "method": "direct"})
            preds.append({"transformer_id": tid, "date": day.isoformat(), "percentile": 0.95,
                          "k_pred": k + 0.05, "method": "direct"})
    return day_inputs, pd.DataFrame(labels), pd.DataFrame(preds)


# ==========================================
# Coverage
# ==========================================
def test_coverage_counts_inclusive_bounds():
    assert coverage([1.0, 1.0], [2.0, 2.0], [1.5, 2.0]) == 100.0
    assert coverage([1.3], [1.3], [1.3]) == 100.0
    assert coverage([1.0, 1.0, 1.0, 1.0], [2.0] * 4, [0.5, 1.0, 2.0, 2.5]) == 50.0


def test_coverage_key_checks():
    lower = pd.Series([1.0, 1.0], index=["a", "b"])
    upper = pd.Series([2.0, 2.0], index=["b", "a"])
    truth = pd.Series([1.5, 2.5], index=["a", "b"])
    assert coverage(lower, upper, truth) == 50.0
    with pytest.raises(DataValidationError):
        coverage(lower, upper, pd.Series([1.5, 1.5], index=["a", "c"]))
    with pytest.raises(DataValidationError):
        coverage([], [], [])


def test_interval_frame_and_per_transformer(scenario):
    _, labels, preds = scenario
    intervals = interval_frame(preds, labels, 0.05, 0.95)
    assert len(intervals) == 8
    per_tx = per_transformer_coverage(intervals)
    assert per_tx["T001"] == 100.0
    assert per_tx["T002"] == 75.0

    with pytest.raises(DataValidationError):
        interval_frame(preds, labels.iloc[1:], 0.05, 0.95)
    with pytest.raises(DataValidationError):
        interval_frame(preds, labels, 0.1, 0.95)


# ==========================================
# Capacity and risk
# ==========================================
def test_capacity_at_steady_preload(make_inputs):
    inputs = make_inputs(offpeak=1.05, peak=1.05)
    assert capacity_pu(1.05, inputs) == pytest.approx(1.05, rel=1e-12)


def test_preload_trip_gives_zero_capacity(make_inputs):
    inputs = make_inputs(offpeak=0.8, peak=1.0)
    capacity, hotspot = realised_outcome(0.3, inputs)
    assert capacity == 0.0
    assert hotspot < 140.0


def test_true_labels_never_exceed_the_limit(scenario):
    day_inputs, labels, _ = scenario
    exact = pd.concat([labels.assign(percentile=p, k_pred=labels["k_opt"]) for p in (0.05, 0.95)])
    outcomes = outcome_frame(exact, day_inputs, fixed_scale_factor=1.05)
    assert set(outcomes["setting"]) == {"p5", "p95", FIXED_SETTING}
    risk = risk_table(outcomes).set_index("setting")
    assert risk.at["p5", "exceedance_pct"] == 0.0
    assert risk.at[FIXED_SETTING, "exceedance_pct"] == 0.0
    assert risk.at["p5", "capacity_gain_pct"] > 0.0
    assert risk.at[FIXED_SETTING, "capacity_gain_pct"] == pytest.approx(0.0)


def test_overrated_setting_always_exceeds(scenario):
    day_inputs, labels, _ = scenario
    hot = labels.assign(percentile=0.95, k_pred=2.5)
    risk = risk_table(outcome_frame(hot, day_inputs, 1.05)).set_index("setting")
    assert risk.at["p95", "exceedance_pct"] == 100.0
    assert risk.at["p95", "mean_hotspot"] > 140.0


def test_hotspot_within_tolerance_is_not_an_exceedance():
    outcomes = pd.DataFrame({"setting": ["p5", "p5"], "capacity_pu": [1.4, 1.5], "hotspot": [140.005, 140.02]})
    risk = risk_table(outcomes).set_index("setting")
    assert risk.at["p5", "exceedance_pct"] == 50.0
    assert "capacity_gain_pct" not in risk.columns


def test_evaluate_predictions_with_risk(scenario):
    day_inputs, labels, preds = scenario
    report = evaluate_predictions("st_cp", preds, labels, (0.05, 0.95), day_inputs)
    assert report.mean_coverage == pytest.approx(87.5)
    assert FIXED_SETTING in set(report.risk["setting"])
    summary = report.to_dict()
    assert summary["extremes"]["worst_transformer"] == "T002"
    assert summary["extremes"]["worst_max_hotspot_p5"] > 0

    plain = evaluate_predictions("st_np", preds, labels, (0.05, 0.95))
    assert plain.risk is None and plain.outcomes is None


# ==========================================
# Noisy temperatures
# ==========================================
def test_zero_noise_run_matches_the_clean_run():
    holdout = pd.DataFrame({"transformer_id": ["T001", "T002"] * 3,
                            "date": ["2025-01-06"] * 2 + ["2025-01-07"] * 2 + ["2025-01-08"] * 2,
                            "peak_ambient": np.arange(6, dtype=float)})
    seen = []
    noisy_temperature_run(lambda temps: seen.append(temps) or pd.DataFrame(), holdout, sigma=0.0)
    np.testing.assert_array_equal(seen[0], holdout["peak_ambient"].to_numpy())


def test_forecast_like_noise_mostly_within_two_degrees():
    n = 4000
    holdout = pd.DataFrame({"transformer_id": [f"T{i % 40:03d}" for i in range(n)],
                            "date": [(START + timedelta(days=i // 40)).isoformat() for i in range(n)],
                            "peak_ambient": np.zeros(n)})
    seen = []
    noisy_temperature_run(lambda temps: seen.append(temps) or pd.DataFrame(), holdout, sigma=1.12, seed=1)
    within = np.mean(np.abs(seen[0]) <= 2.0)
    assert 0.90 <= within <= 0.95


# ==========================================
# Temperature sensitivity
# ==========================================
def test_labels_fall_as_ambient_rises(make_inputs):
    inputs = make_inputs(offpeak=0.8, peak=1.0, tid="T001")
    table = temperature_sensitivity([inputs], grid=(-10.0, 30.0, 10.0), step=2.5)
    row = table.iloc[0]
    assert row["n_points"] == 5
    assert row["sensitivity"] < 0
    assert abs(row["sensitivity_half_step"] - row["sensitivity"]) <= 0.05 * abs(row["sensitivity"])

    summary = sensitivity_summary(table, forecast_deviation=2.0)
    assert summary["min"] == summary["max"] == pytest.approx(row["sensitivity"])
    assert summary["k_error_bound_max"] == pytest.approx(2.0 * abs(row["sensitivity"]))
    assert sensitivity_summary(table.head(0)) == {}


def test_central_difference_matches_label_shift(make_inputs):
    inputs = make_inputs(offpeak=0.8, peak=1.0)
    slope = central_difference(inputs, 10.0, 1.0, SearchBounds())
    up = optimal_scale_factor(inputs.with_ambient(11.0)).k_opt
    down = optimal_scale_factor(inputs.with_ambient(9.0)).k_opt
    assert slope == pytest.approx((up - down) / 2.0)
    assert abs(hotspot_at_k(up, inputs.with_ambient(11.0)) - 140.0) <= 0.01


def test_clamped_points_are_excluded(make_inputs):
    inputs = make_inputs(offpeak=0.2, peak=0.3, ambient=-20.0)
    assert central_difference(inputs, -20.0, 2.5, SearchBounds(k_max=0.6)) is None
    table = temperature_sensitivity([inputs], grid=(-20.0, -10.0, 5.0), bounds=SearchBounds(k_max=0.6))
    assert table.empty


def test_sensitivity_days_are_spread_over_the_history(make_inputs):
    day_inputs = {("T001", START + timedelta(days=i)): make_inputs(day=START + timedelta(days=i)) for i in range(10)}
    sample = sensitivity_days(day_inputs, 3)
    assert [s.day for s in sample] == [START, START + timedelta(days=4), START + timedelta(days=9)]
    assert len(sensitivity_days(day_inputs, 50)) == 10


# ==========================================
# Reports
# ==========================================
def test_reports_are_written(tmp_path, scenario, make_inputs):
    day_inputs, labels, preds = scenario
    reports = {
        "st_cp": evaluate_predictions("st_cp", preds, labels, (0.05, 0.95), day_inputs),
        "st_np": evaluate_predictions("st_np", preds, labels, (0.05, 0.95)),
    }
    sensitivity = temperature_sensitivity([make_inputs(tid="T001")], grid=(0.0, 10.0, 5.0))
    reports["st_cp"].sensitivity = sensitivity_summary(sensitivity)

    histogram = coverage_histogram(reports)
    assert histogram["st_cp"].sum() == 2
    assert histogram.loc[histogram["bin_low"] == 90.0, "st_cp"].item() == 1

    written = write_reports(tmp_path, reports, "st_cp", sensitivity=sensitivity)
    names = {p.name for p in written}
    assert {"risk_table.csv", "capacity_cdf.csv", "hotspot_cdf.csv", "trace_best.csv", "trace_worst.csv",
            "coverage_cdf_st_cp.csv", "coverage_cdf_st_np.csv", "coverage_histogram.csv",
            "sensitivity.csv", "report.json"} <= names
    summary = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert summary["primary_scenario"] == "st_cp"
    assert summary["mean_coverage"]["st_np"] == pytest.approx(87.5)
    assert "sensitivity" in summary
    trace = pd.read_csv(tmp_path / "trace_worst.csv")
    assert set(trace["transformer_id"]) == {"T002"}


@pytest.mark.slow
def test_fleet_sensitivity_is_negative_and_stable(labeled_fleet):
    _, day_inputs, _ = labeled_fleet
    table = temperature_sensitivity(sensitivity_days(day_inputs, 3))
    assert not table.empty
    assert (table["sensitivity"] < 0).all()
    assert 0.005 <= table["sensitivity"].abs().mean() <= 0.02
    assert sensitivity_summary(table)["max_step_halving_change"] < 0.05
