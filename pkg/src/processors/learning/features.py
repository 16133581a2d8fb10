# src/processors/learning/features.py
"""
Day-ahead feature vectors per (transformer, day).

Loads enter only through their one-day and one-week lags (per-phase period
means and unbalance), together with the lagged optimal scale factors, calendar
flags, the day's peak ambient temperature and its EWMA, and the transformer's
metadata. Target-day loads are carried alongside as targets for the load
models, never as features.
"""
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.processors.data.records import FleetData, TransformerMeta, WeatherSeries
from src.processors.physics.thermal import DayWindow, window_blocks
from src.utils import Log, measure_time
from src.utils.exceptions import DataValidationError, GapError, InsufficientHistoryError, ParameterError

PHASES = ("a", "b", "c")
PERIODS = ("peak", "offpeak")
LAGS = (1, 7)
MIN_PRIOR_LABELS = 7

LOAD_MEAN_COLUMNS = [f"{period}_mean_{ph}" for period in PERIODS for ph in PHASES]
LAG_LOAD_COLUMNS = [f"lag{lag}_{col}" for lag in LAGS for col in LOAD_MEAN_COLUMNS]
LAG_UNBALANCE_COLUMNS = [f"lag{lag}_{period}_unbalance" for lag in LAGS for period in PERIODS]
LAG_K_COLUMNS = [f"lag{lag}_k_opt" for lag in LAGS]
CALENDAR_COLUMNS = ["day_of_week", "is_weekend", "is_holiday"]
TEMPERATURE_COLUMNS = ["peak_ambient", "ewma_ambient"]
META_COLUMNS = ["rated_power", "num_customers", "transformer_id"]

FEATURE_COLUMNS = (
    LAG_LOAD_COLUMNS + LAG_UNBALANCE_COLUMNS + LAG_K_COLUMNS
    + CALENDAR_COLUMNS + TEMPERATURE_COLUMNS + META_COLUMNS
)
CATEGORICAL_COLUMNS = ["transformer_id"]

# Feature table layout: keys, features, helpers for temperature substitution, targets
AUX_COLUMNS = ["ewma_ambient_prev", "ambient_forecast"]
TARGET_COLUMNS = ["k_opt", "boundary_flag"]
TABLE_COLUMNS = (
    ["transformer_id", "date"]
    + [c for c in FEATURE_COLUMNS if c != "transformer_id"]
    + AUX_COLUMNS + TARGET_COLUMNS + LOAD_MEAN_COLUMNS
)
NOISE_COLUMN = "random_noise"


# ==========================================
# Elementary feature functions
# ==========================================
def ewma_temperature(history: Iterable[float], alpha: float) -> float:
    """Recursive EWMA seeded with the first value: s ← s + α(x − s)."""
    if not (0.0 < alpha <= 1.0):
        raise ParameterError(f"EWMA alpha must lie in (0, 1], got {alpha}")
    values = pd.Series(list(history), dtype=float)
    if values.empty:
        raise ParameterError("EWMA needs a non-empty temperature history")
    return float(values.ewm(alpha=alpha, adjust=False).mean().iloc[-1])


def unbalance(means: Sequence[float]) -> float:
    """(max − min) / mean over the three phase means."""
    values = np.asarray(means, dtype=float)
    mean = values.mean()
    if mean == 0:
        raise DataValidationError("Unbalance undefined for a zero mean load")
    return float((values.max() - values.min()) / mean)


def summarise_day(series, window: DayWindow, day: date) -> Dict[str, float]:
    """Arithmetic per-phase means of the peak and off-peak windows of one day."""
    offpeak, peak = window_blocks(series, window, day)
    means = {"peak": peak.mean(axis=0), "offpeak": offpeak.mean(axis=0)}
    return {f"{period}_mean_{ph}": float(means[period][i]) for period in PERIODS for i, ph in enumerate(PHASES)}


@measure_time
def summarise_days(fleet: FleetData, window: DayWindow) -> pd.DataFrame:
    """Period means for every complete (transformer, day); incomplete days are skipped."""
    rows = []
    skipped = 0
    for tid in tqdm(fleet.transformer_ids, desc="Day summaries", disable=Log.progress_disabled()):
        series = fleet.loads[tid]
        for day in series.dates():
            try:
                rows.append({"transformer_id": tid, "date": day.isoformat(), **summarise_day(series, window, day)})
            except GapError:
                skipped += 1
    if skipped:
        Log.info(f"Day summaries skipped {skipped} incomplete day(s)")
    return pd.DataFrame(rows, columns=["transformer_id", "date"] + LOAD_MEAN_COLUMNS)


def _ewma_prev_series(weather: WeatherSeries, alpha: float) -> Dict[date, float]:
    """EWMA of the true temperatures up to the previous day, keyed by day; the first day holds its own value."""
    truth = pd.Series(weather.ambient_true, index=list(weather.dates))
    smoothed = truth.ewm(alpha=alpha, adjust=False).mean()
    prev = smoothed.shift(1)
    prev.iloc[0] = truth.iloc[0]
    return dict(zip(weather.dates, prev.to_numpy(dtype=float)))


def ewma_update(prev: np.ndarray, temperature: np.ndarray, alpha: float) -> np.ndarray:
    return prev + alpha * (temperature - prev)


@dataclass(frozen=True)
class FeatureVector:
    transformer_id: str
    date: date
    values: Dict[str, object]
    ewma_ambient_prev: float

    def __getitem__(self, column: str):
        return self.values[column]

    def as_row(self) -> Dict[str, object]:
        return {"transformer_id": self.transformer_id, "date": self.date.isoformat(),
                **{c: self.values[c] for c in FEATURE_COLUMNS if c != "transformer_id"},
                "ewma_ambient_prev": self.ewma_ambient_prev}


def build_features(meta: TransformerMeta, day: date, label_history: Mapping[date, float],
                   load_history: Mapping[date, Mapping[str, float]], weather: WeatherSeries,
                   holidays: Set[date], alpha: float = 0.05, use_forecast: bool = False,
                   ewma_prev: Optional[float] = None) -> FeatureVector:
    """
    Feature vector for `day` using only lagged loads and labels, the calendar,
    the day's peak ambient (true or forecast) and static metadata.

    `label_history` maps day → k*, `load_history` maps day → period means.
    """
    prior_labels = sum(1 for d in label_history if d < day)
    if prior_labels < MIN_PRIOR_LABELS:
        raise InsufficientHistoryError(
            f"{meta.transformer_id} {day}: {prior_labels} prior labeled day(s), {MIN_PRIOR_LABELS} required"
        )

    values: Dict[str, object] = {}
    for lag in LAGS:
        lag_day = day - timedelta(days=lag)
        loads = load_history.get(lag_day)
        k_lag = label_history.get(lag_day)
        if loads is None or k_lag is None:
            raise InsufficientHistoryError(f"{meta.transformer_id} {day}: no data for lag {lag} ({lag_day})")
        for col in LOAD_MEAN_COLUMNS:
            values[f"lag{lag}_{col}"] = float(loads[col])
        for period in PERIODS:
            values[f"lag{lag}_{period}_unbalance"] = unbalance([loads[f"{period}_mean_{ph}"] for ph in PHASES])
        values[f"lag{lag}_k_opt"] = float(k_lag)

    values["day_of_week"] = day.weekday()
    values["is_weekend"] = int(day.weekday() >= 5)
    values["is_holiday"] = int(day in holidays)

    ambient = weather.forecast_on(day) if use_forecast else weather.true_on(day)
    if ewma_prev is None:
        prior = [t for d, t in zip(weather.dates, weather.ambient_true) if d < day]
        ewma_prev = ewma_temperature(prior, alpha) if prior else ambient
    values["peak_ambient"] = float(ambient)
    values["ewma_ambient"] = float(ewma_prev + alpha * (ambient - ewma_prev))

    values["rated_power"] = float(meta.rated_power)
    values["num_customers"] = int(meta.num_customers)
    values["transformer_id"] = meta.transformer_id
    return FeatureVector(meta.transformer_id, day, values, float(ewma_prev))


# ==========================================
# Fleet feature table
# ==========================================
class FeatureBuilder:
    """Assembles the feature table for a labeled fleet; rows without both lags are excluded."""

    def __init__(self, fleet: FleetData, alpha: float = 0.05):
        if not (0.0 < alpha <= 1.0):
            raise ParameterError(f"EWMA alpha must lie in (0, 1], got {alpha}")
        self.fleet = fleet
        self.alpha = alpha

    @measure_time
    def build_table(self, labels: pd.DataFrame, summary: pd.DataFrame) -> pd.DataFrame:
        label_days = {tid: group for tid, group in labels.groupby("transformer_id")}
        summary_days = {tid: group for tid, group in summary.groupby("transformer_id")}
        rows: List[Dict[str, object]] = []
        excluded = 0

        for tid in tqdm(self.fleet.transformer_ids, desc="Features", disable=Log.progress_disabled()):
            if tid not in label_days or tid not in summary_days:
                continue
            meta = self.fleet.metas[tid]
            weather = self.fleet.weather_for(tid)
            ewma_prev = _ewma_prev_series(weather, self.alpha)
            lab = label_days[tid]
            k_history = dict(zip(pd.to_datetime(lab["date"]).dt.date, lab["k_opt"].astype(float)))
            flags = dict(zip(pd.to_datetime(lab["date"]).dt.date, lab["boundary_flag"]))
            summ = summary_days[tid]
            load_history = {
                d: rec for d, rec in zip(pd.to_datetime(summ["date"]).dt.date,
                                         summ[LOAD_MEAN_COLUMNS].to_dict(orient="records"))
            }

            for day in sorted(k_history):
                if day not in load_history:
                    continue
                try:
                    vector = build_features(meta, day, k_history, load_history, weather, self.fleet.holidays,
                                            self.alpha, ewma_prev=ewma_prev.get(day))
                except (InsufficientHistoryError, DataValidationError):
                    excluded += 1
                    continue
                row = vector.as_row()
                row["ambient_forecast"] = (weather.forecast_on(day) if weather.ambient_forecast is not None
                                           else np.nan)
                row["k_opt"] = k_history[day]
                row["boundary_flag"] = flags[day]
                row.update(load_history[day])
                rows.append(row)

        if excluded:
            Log.info(f"Feature table excluded {excluded} day(s) without one-day and one-week lags")
        table = pd.DataFrame(rows, columns=TABLE_COLUMNS)
        Log.info(f"Feature table: {len(table)} rows x {len(FEATURE_COLUMNS)} features")
        return table


def with_temperature(table: pd.DataFrame, temperatures, alpha: float) -> pd.DataFrame:
    """Copy of `table` with peak_ambient replaced and ewma_ambient re-derived from the previous-day EWMA."""
    out = table.copy()
    temps = np.asarray(temperatures, dtype=float)
    out["peak_ambient"] = temps
    out["ewma_ambient"] = ewma_update(out["ewma_ambient_prev"].to_numpy(dtype=float), temps, alpha)
    return out


# ==========================================
# Noise-based pruning
# ==========================================
ImportanceFn = Callable[[pd.DataFrame, np.ndarray, List[str]], Dict[str, float]]


def prune_features(training_table: pd.DataFrame, importance_fn: ImportanceFn,
                   feature_columns: Sequence[str] = tuple(FEATURE_COLUMNS), target: str = "k_opt",
                   seed: int = 0, min_rows: int = 100) -> List[str]:
    """
    Append a uniform-noise column, score every feature with `importance_fn`
    and keep those at least as important as the noise. The noise column is
    never returned.
    """
    if len(training_table) < min_rows:
        raise DataValidationError(f"Feature pruning needs at least {min_rows} rows, got {len(training_table)}")
    y = training_table[target].to_numpy(dtype=float)
    if np.ptp(y) == 0:
        raise DataValidationError("Feature pruning on a constant target")

    frame = training_table[list(feature_columns)].copy()
    frame[NOISE_COLUMN] = np.random.default_rng(seed).uniform(size=len(frame))
    names = list(feature_columns) + [NOISE_COLUMN]
    importance = importance_fn(frame, y, names)

    threshold = importance.get(NOISE_COLUMN, 0.0)
    retained = [c for c in feature_columns if importance.get(c, 0.0) >= threshold and importance.get(c, 0.0) > 0]
    dropped = [c for c in feature_columns if c not in retained]
    if dropped:
        Log.info(f"Pruned {len(dropped)} feature(s) below noise importance: {dropped}")
    if not retained:
        raise DataValidationError("Feature pruning removed every feature")
    return retained
