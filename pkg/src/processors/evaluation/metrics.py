# src/processors/evaluation/metrics.py
"""
Calibration, capacity, risk and temperature-sensitivity metrics over holdout
predictions. Realised hotspots always use the true ambient temperature and
the true day loads, with the relay set to the evaluated scale factor.
"""
from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.processors.learning.forecaster import prediction_temperatures
from src.processors.physics.labeler import (
    BoundaryFlag,
    DayInputs,
    SearchBounds,
    hotspot_at_k,
    optimal_scale_factor,
    relay_trip_current,
)
from src.processors.physics.thermal import LoadFactors, hotspot_temperature
from src.utils import Log, measure_time
from src.utils.exceptions import AlreadyTrippingError, DataValidationError

KEY = ["transformer_id", "date"]
FIXED_SETTING = "fixed"


# ==========================================
# Coverage
# ==========================================
def interval_frame(predictions: pd.DataFrame, truth: pd.DataFrame, lower: float, upper: float) -> pd.DataFrame:
    """Wide (transformer_id, date) frame with lower, upper and the realised k*."""
    wide = predictions.pivot_table(index=KEY, columns="percentile", values="k_pred", aggfunc="first")
    missing = [p for p in (lower, upper) if p not in wide.columns]
    if missing:
        raise DataValidationError(f"Predictions lack percentile(s) {missing}")
    frame = pd.DataFrame({"lower": wide[lower], "upper": wide[upper]})
    labels = truth.set_index(KEY)["k_opt"]
    if set(frame.index) != set(labels.index):
        raise DataValidationError(
            f"Prediction/label keys differ: {len(set(frame.index) - set(labels.index))} unmatched prediction(s), "
            f"{len(set(labels.index) - set(frame.index))} unmatched label(s)"
        )
    frame["k_opt"] = labels.reindex(frame.index)
    return frame.sort_index()


def coverage(lower, upper, truth) -> float:
    """Percentage of truths inside the inclusive interval [lower, upper]; inputs must share their keys."""
    lower, upper, truth = (pd.Series(v) if not isinstance(v, pd.Series) else v for v in (lower, upper, truth))
    if not (lower.index.equals(upper.index) and lower.index.equals(truth.index)):
        if set(lower.index) != set(truth.index) or set(upper.index) != set(truth.index):
            raise DataValidationError("Coverage inputs have mismatched keys")
        upper, truth = upper.reindex(lower.index), truth.reindex(lower.index)
    if len(truth) == 0:
        raise DataValidationError("Coverage of an empty set")
    inside = (lower.to_numpy() <= truth.to_numpy()) & (truth.to_numpy() <= upper.to_numpy())
    return float(100.0 * inside.mean())


def per_transformer_coverage(intervals: pd.DataFrame) -> pd.Series:
    inside = (intervals["lower"] <= intervals["k_opt"]) & (intervals["k_opt"] <= intervals["upper"])
    return (100.0 * inside.groupby(level="transformer_id").mean()).rename("coverage")


def coverage_cdf(per_transformer: pd.Series) -> pd.DataFrame:
    values = np.sort(per_transformer.to_numpy(dtype=float))
    return pd.DataFrame({"coverage": values, "cumulative_fraction": np.arange(1, len(values) + 1) / len(values)})


# ==========================================
# Capacity and risk
# ==========================================
def capacity_pu(k: float, day_inputs: DayInputs) -> float:
    """Relay trip current at scale factor k for the day's preload and peak duration, per unit of rating."""
    return relay_trip_current(k, day_inputs) / day_inputs.rated_phase_current


def _unloaded_peak_hotspot(inputs: DayInputs) -> float:
    observed = inputs.observed_factors()
    factors = LoadFactors(observed.k_oil_offpeak, 0.0, observed.k_winding_offpeak, 0.0)
    return hotspot_temperature(factors, inputs.ambient, inputs.params, inputs.peak_duration)


def realised_outcome(k: float, inputs: DayInputs) -> Tuple[float, float]:
    """(capacity p.u., hotspot °C) with the relay at k; a relay already tripping on the preload gives zero capacity."""
    try:
        return capacity_pu(k, inputs), hotspot_at_k(k, inputs)
    except AlreadyTrippingError:
        return 0.0, _unloaded_peak_hotspot(inputs)


def _setting_label(percentile: float) -> str:
    return f"p{percentile * 100:g}"


@measure_time
def outcome_frame(predictions: pd.DataFrame, day_inputs: Mapping[Tuple[str, date], DayInputs],
                  fixed_scale_factor: float) -> pd.DataFrame:
    """Per (transformer, day, setting) k, capacity and hotspot, including the fixed-k baseline."""
    rows = []
    tripping = 0
    keys = predictions[KEY].drop_duplicates().itertuples(index=False)
    wide = predictions.pivot_table(index=KEY, columns="percentile", values="k_pred", aggfunc="first")
    for tid, day in tqdm(list(keys), desc="Outcomes", disable=Log.progress_disabled()):
        inputs = day_inputs.get((tid, date.fromisoformat(day)))
        if inputs is None:
            raise DataValidationError(f"No day inputs for {tid} {day}")
        settings = [(_setting_label(p), float(wide.at[(tid, day), p])) for p in wide.columns]
        settings.append((FIXED_SETTING, fixed_scale_factor))
        for label, k in settings:
            capacity, hotspot = realised_outcome(k, inputs)
            if capacity == 0.0:
                tripping += 1
            rows.append({"transformer_id": tid, "date": day, "setting": label, "k": k,
                         "capacity_pu": capacity, "hotspot": hotspot})
    if tripping:
        Log.warning(f"{tripping} evaluated setting(s) trip on the preload alone (capacity 0)")
    return pd.DataFrame(rows)


def risk_table(outcomes: pd.DataFrame, hotspot_limit: float = 140.0, tolerance: float = 0.01) -> pd.DataFrame:
    """
    Per setting: mean and std of capacity, mean hotspot, percentage of days
    above the hotspot limit, and the capacity gain over the fixed baseline.
    """
    exceeded = outcomes["hotspot"] > hotspot_limit + tolerance
    grouped = outcomes.assign(exceeded=exceeded).groupby("setting", sort=False)
    table = pd.DataFrame({
        "mean_capacity_pu": grouped["capacity_pu"].mean(),
        "capacity_std_pu": grouped["capacity_pu"].std(ddof=0),
        "mean_hotspot": grouped["hotspot"].mean(),
        "exceedance_pct": 100.0 * grouped["exceeded"].mean(),
        "n_days": grouped.size(),
    })
    if FIXED_SETTING in table.index:
        base = table.at[FIXED_SETTING, "mean_capacity_pu"]
        table["capacity_gain_pct"] = 100.0 * (table["mean_capacity_pu"] / base - 1.0) if base > 0 else np.nan
    return table.reset_index()


# ==========================================
# Noisy temperatures
# ==========================================
def noisy_temperature_run(replay: Callable[[np.ndarray], pd.DataFrame], holdout: pd.DataFrame,
                          sigma: float = 1.12, seed: int = 0) -> pd.DataFrame:
    """Holdout predictions with N(0, σ²) added to the prediction-time temperature; labels stay on the truth."""
    temperatures = prediction_temperatures(holdout, "noisy", sigma, seed)
    deviation = np.abs(temperatures - holdout["peak_ambient"].to_numpy(dtype=float))
    if len(deviation):
        Log.info(f"Noisy temperatures: {100 * np.mean(deviation <= 2.0):.1f}% within 2 °C of the truth")
    return replay(temperatures)


# ==========================================
# Temperature sensitivity
# ==========================================
def _interior_k(inputs: DayInputs, ambient: float, bounds: SearchBounds) -> Optional[float]:
    try:
        label = optimal_scale_factor(inputs.with_ambient(ambient), bounds)
    except AlreadyTrippingError:
        return None
    return label.k_opt if label.boundary_flag == BoundaryFlag.INTERIOR_ROOT else None


def central_difference(inputs: DayInputs, ambient: float, step: float, bounds: SearchBounds) -> Optional[float]:
    """dk*/dθ_A at `ambient` by central differences; None when either side is clamped."""
    upper = _interior_k(inputs, ambient + step, bounds)
    lower = _interior_k(inputs, ambient - step, bounds)
    if upper is None or lower is None:
        return None
    return (upper - lower) / (2.0 * step)


@measure_time
def temperature_sensitivity(day_inputs: Sequence[DayInputs], grid: Tuple[float, float, float] = (-20.0, 40.0, 5.0),
                            step: float = 2.5, bounds: SearchBounds = SearchBounds()) -> pd.DataFrame:
    """
    Per-transformer mean dk*/dθ_A over the temperature grid with loads held
    fixed, at step h and h/2. Clamped points are excluded.
    """
    start, stop, spacing = grid
    temperatures = np.arange(start, stop + spacing / 2.0, spacing)
    by_transformer: Dict[str, List[Tuple[float, float]]] = {}
    for inputs in tqdm(day_inputs, desc="Sensitivity", disable=Log.progress_disabled()):
        for ambient in temperatures:
            full = central_difference(inputs, float(ambient), step, bounds)
            half = central_difference(inputs, float(ambient), step / 2.0, bounds)
            if full is None or half is None:
                continue
            by_transformer.setdefault(inputs.transformer_id, []).append((full, half))

    rows = []
    for tid, values in sorted(by_transformer.items()):
        full, half = np.asarray(values).T
        rows.append({"transformer_id": tid, "sensitivity": float(full.mean()),
                     "sensitivity_half_step": float(half.mean()), "n_points": len(values)})
    return pd.DataFrame(rows, columns=["transformer_id", "sensitivity", "sensitivity_half_step", "n_points"])


def sensitivity_summary(per_transformer: pd.DataFrame, forecast_deviation: float = 2.0) -> Dict[str, float]:
    if per_transformer.empty:
        return {}
    s = per_transformer["sensitivity"].to_numpy(dtype=float)
    h = per_transformer["sensitivity_half_step"].to_numpy(dtype=float)
    rel_change = np.abs(h - s) / np.maximum(np.abs(s), 1e-12)
    return {
        "min": float(s.min()),
        "mean": float(s.mean()),
        "max": float(s.max()),
        "max_step_halving_change": float(rel_change.max()),
        "forecast_deviation_c": float(forecast_deviation),
        "k_error_bound_min": float(np.abs(s).min() * forecast_deviation),
        "k_error_bound_max": float(np.abs(s).max() * forecast_deviation),
    }


def sensitivity_days(day_inputs: Mapping[Tuple[str, date], DayInputs], days_per_transformer: int) -> List[DayInputs]:
    """Evenly spaced sample of each transformer's labeled days."""
    by_transformer: Dict[str, List[DayInputs]] = {}
    for (tid, _), inputs in sorted(day_inputs.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        by_transformer.setdefault(tid, []).append(inputs)
    sample = []
    for tid, days in by_transformer.items():
        idx = np.unique(np.linspace(0, len(days) - 1, num=min(days_per_transformer, len(days))).round().astype(int))
        sample.extend(days[i] for i in idx)
    return sample


# ==========================================
# Report
# ==========================================
def coverage_traces(intervals: pd.DataFrame, per_transformer: pd.Series) -> Dict[str, pd.DataFrame]:
    """Daily interval traces of the best- and worst-calibrated transformers."""
    ordered = per_transformer.sort_index()
    best, worst = ordered.idxmax(), ordered.idxmin()
    return {
        "best": intervals.loc[best].reset_index().assign(transformer_id=best),
        "worst": intervals.loc[worst].reset_index().assign(transformer_id=worst),
    }


@dataclass
class EvaluationReport:
    scenario: str
    per_transformer_coverage: pd.Series
    intervals: pd.DataFrame
    risk: Optional[pd.DataFrame] = None
    outcomes: Optional[pd.DataFrame] = field(default=None, repr=False)
    sensitivity: Dict[str, float] = field(default_factory=dict)

    @property
    def mean_coverage(self) -> float:
        return float(self.per_transformer_coverage.mean())

    def extremes(self) -> Dict[str, object]:
        cov = self.per_transformer_coverage.sort_index()
        info: Dict[str, object] = {
            "best_transformer": str(cov.idxmax()), "best_coverage": float(cov.max()),
            "worst_transformer": str(cov.idxmin()), "worst_coverage": float(cov.min()),
        }
        if self.outcomes is not None and not self.outcomes.empty:
            low = self.outcomes[(self.outcomes["transformer_id"] == info["worst_transformer"])
                                & (self.outcomes["setting"] == "p5")]
            if not low.empty:
                info["worst_max_hotspot_p5"] = float(low["hotspot"].max())
        return info

    def to_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "scenario": self.scenario,
            "mean_coverage": self.mean_coverage,
            "per_transformer_coverage": {str(k): float(v) for k, v in self.per_transformer_coverage.items()},
            "extremes": self.extremes(),
        }
        if self.risk is not None:
            out["risk_table"] = self.risk.to_dict(orient="records")
        if self.sensitivity:
            out["sensitivity"] = self.sensitivity
        return out


def evaluate_predictions(scenario: str, predictions: pd.DataFrame, truth: pd.DataFrame,
                         interval: Tuple[float, float], day_inputs: Optional[Mapping] = None,
                         fixed_scale_factor: float = 1.05, hotspot_limit: float = 140.0,
                         tolerance: float = 0.01) -> EvaluationReport:
    """Coverage for any scenario; capacity/risk as well when day inputs are supplied."""
    intervals = interval_frame(predictions, truth, *interval)
    per_transformer = per_transformer_coverage(intervals)
    report = EvaluationReport(scenario, per_transformer, intervals)
    if day_inputs is not None:
        report.outcomes = outcome_frame(predictions, day_inputs, fixed_scale_factor)
        report.risk = risk_table(report.outcomes, hotspot_limit, tolerance)
    Log.info(f"[{scenario}] fleet-mean coverage {report.mean_coverage:.1f}%")
    return report
