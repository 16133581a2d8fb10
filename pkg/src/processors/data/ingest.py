# src/processors/data/ingest.py
"""
CSV ingestion and export for fleet data (loads, weather, metadata, holidays).
Rejections report the offending 0-based data row index.
"""
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, Optional, Set

import numpy as np
import pandas as pd

from src.processors.data.records import (
    SAMPLES_PER_DAY,
    FleetData,
    LoadSeries,
    TransformerMeta,
    WeatherSeries,
)
from src.processors.physics.thermal import ThermalParams
from src.utils import CsvHandler, Log
from src.utils.exceptions import DataValidationError, ParameterError

LOAD_COLUMNS = ["transformer_id", "timestamp_iso8601", "i_a_amps", "i_b_amps", "i_c_amps"]
WEATHER_COLUMNS = ["site_id", "date", "ambient_true_c", "ambient_forecast_c"]
META_COLUMNS = ["transformer_id", "rated_kva", "rated_phase_amps", "num_customers",
                "dtheta_to_r", "dtheta_h_r", "loss_ratio", "n_exp", "m_exp",
                "tau_oil_min", "tau_wind_min"]

CADENCE = pd.Timedelta(minutes=30)
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def _rms_resample(frame: pd.DataFrame) -> pd.DataFrame:
    """Aggregate a non-30-min series onto the 30-min grid by RMS."""
    squared = frame[["i_a_amps", "i_b_amps", "i_c_amps"]] ** 2
    squared.index = frame["timestamp"]
    resampled = squared.resample(CADENCE, label="left", closed="left").mean().dropna(how="any")
    out = np.sqrt(resampled).reset_index()
    return out.rename(columns={"index": "timestamp"})


def _validate_group(tid: str, group: pd.DataFrame) -> None:
    ts = group["timestamp"]
    duplicated = ts.duplicated(keep="first")
    if duplicated.any():
        row = int(duplicated.idxmax())
        raise DataValidationError(f"{tid}: duplicated timestamp {ts.loc[row]} at row {row}")
    steps = ts.diff()
    backwards = steps < pd.Timedelta(0)
    if backwards.any():
        row = int(backwards.idxmax())
        raise DataValidationError(f"{tid}: non-monotone timestamp {ts.loc[row]} at row {row}")


def ingest_loads(path: Path) -> Dict[str, LoadSeries]:
    frame = CsvHandler.read_csv(Path(path), required_columns=LOAD_COLUMNS, dtype={"transformer_id": str})
    if frame.empty:
        Log.warning(f"{Path(path).name} contains no load samples")
        return {}

    currents = frame[["i_a_amps", "i_b_amps", "i_c_amps"]]
    if currents.isna().any().any():
        row = int(currents.isna().any(axis=1).idxmax())
        raise DataValidationError(f"Missing current value at row {row}")
    negative = (currents < 0).any(axis=1)
    if negative.any():
        row = int(negative.idxmax())
        raise DataValidationError(f"Negative current at row {row}")

    try:
        frame["timestamp"] = pd.to_datetime(frame["timestamp_iso8601"], utc=True).dt.tz_localize(None)
    except (ValueError, TypeError) as e:
        raise DataValidationError(f"Unparseable timestamp in {Path(path).name}: {e}") from e

    series: Dict[str, LoadSeries] = {}
    for tid, group in frame.groupby("transformer_id", sort=True):
        _validate_group(tid, group)
        cadence = group["timestamp"].diff().median() if len(group) > 1 else CADENCE
        if cadence != CADENCE:
            Log.info(f"{tid}: resampling {cadence} cadence to 30 min by RMS")
            group = _rms_resample(group)

        timestamps = pd.DatetimeIndex(group["timestamp"])
        counts = pd.Series(timestamps.date).value_counts()
        incomplete = {d for d, n in counts.items() if n < SAMPLES_PER_DAY}
        if incomplete:
            Log.warning(f"{tid}: {len(incomplete)} incomplete day(s) flagged")

        series[str(tid)] = LoadSeries(
            transformer_id=str(tid),
            timestamps=timestamps,
            currents=group[["i_a_amps", "i_b_amps", "i_c_amps"]].to_numpy(dtype=float),
            incomplete_days=incomplete,
        )
    return series


def ingest_weather(path: Path) -> Dict[str, WeatherSeries]:
    frame = CsvHandler.read_csv(Path(path), required_columns=WEATHER_COLUMNS[:3], dtype={"site_id": str})
    if "ambient_forecast_c" not in frame.columns:
        frame["ambient_forecast_c"] = np.nan
    frame["date"] = pd.to_datetime(frame["date"]).dt.date

    weather: Dict[str, WeatherSeries] = {}
    for site, group in frame.groupby("site_id", sort=True):
        group = group.sort_values("date")
        if group["date"].duplicated().any():
            row = int(group["date"].duplicated().idxmax())
            raise DataValidationError(f"{site}: duplicated weather date at row {row}")
        forecast = group["ambient_forecast_c"].to_numpy(dtype=float)
        weather[str(site)] = WeatherSeries(
            site_id=str(site),
            dates=list(group["date"]),
            ambient_true=group["ambient_true_c"].to_numpy(dtype=float),
            ambient_forecast=None if np.isnan(forecast).all() else forecast,
        )
    return weather


def ingest_meta(path: Path) -> Dict[str, TransformerMeta]:
    frame = CsvHandler.read_csv(Path(path), required_columns=META_COLUMNS, dtype={"transformer_id": str})
    metas: Dict[str, TransformerMeta] = {}
    for row_index, row in frame.iterrows():
        try:
            thermal = ThermalParams(
                rated_top_oil_rise=float(row["dtheta_to_r"]),
                rated_hotspot_rise=float(row["dtheta_h_r"]),
                loss_ratio=float(row["loss_ratio"]),
                oil_exponent=float(row["n_exp"]),
                winding_exponent=float(row["m_exp"]),
                tau_oil=float(row["tau_oil_min"]),
                tau_winding=float(row["tau_wind_min"]),
            )
        except ParameterError as e:
            raise DataValidationError(f"Invalid thermal parameters at row {row_index}: {e}") from e
        site = row.get("site_id") if "site_id" in frame.columns else None
        meta = TransformerMeta(
            transformer_id=str(row["transformer_id"]),
            rated_power=float(row["rated_kva"]),
            rated_phase_current=float(row["rated_phase_amps"]),
            num_customers=int(row["num_customers"]),
            thermal=thermal,
            site_id=None if site is None or pd.isna(site) else str(site),
        )
        if meta.transformer_id in metas:
            raise DataValidationError(f"Duplicated transformer id '{meta.transformer_id}' at row {row_index}")
        metas[meta.transformer_id] = meta
    return metas


def ingest_holidays(path: Optional[Path]) -> Set[date]:
    if path is None or not Path(path).exists():
        return set()
    holidays = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                holidays.add(date.fromisoformat(text))
            except ValueError as e:
                raise DataValidationError(f"Invalid holiday date '{text}' at line {line_no}") from e
    return holidays


def load_fleet(loads: Path, weather: Path, meta: Path, holidays: Optional[Path] = None) -> FleetData:
    metas = ingest_meta(meta)
    series = ingest_loads(loads)
    unknown = sorted(set(series) - set(metas))
    if unknown:
        raise DataValidationError(f"Load series without metadata: {unknown[:5]}")
    missing = sorted(set(metas) - set(series))
    if missing:
        Log.warning(f"{len(missing)} transformer(s) have metadata but no load data; dropped")
        metas = {k: v for k, v in metas.items() if k in series}
    fleet = FleetData(metas=metas, loads=series, weather=ingest_weather(weather), holidays=ingest_holidays(holidays))
    Log.info(f"Loaded fleet: {len(fleet.metas)} transformers, {len(fleet.weather)} weather sites, "
             f"{len(fleet.holidays)} holidays")
    return fleet


# ==========================================
# Export
# ==========================================
def loads_frame(series: Iterable[LoadSeries]) -> pd.DataFrame:
    parts = []
    for s in series:
        parts.append(pd.DataFrame({
            "transformer_id": s.transformer_id,
            "timestamp_iso8601": s.timestamps.strftime(TIMESTAMP_FORMAT),
            "i_a_amps": s.i_a,
            "i_b_amps": s.i_b,
            "i_c_amps": s.i_c,
        }))
    return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=LOAD_COLUMNS)


def weather_frame(weather: Iterable[WeatherSeries]) -> pd.DataFrame:
    parts = []
    for w in weather:
        forecast = w.ambient_forecast if w.ambient_forecast is not None else np.full(len(w.dates), np.nan)
        parts.append(pd.DataFrame({
            "site_id": w.site_id,
            "date": [d.isoformat() for d in w.dates],
            "ambient_true_c": w.ambient_true,
            "ambient_forecast_c": forecast,
        }))
    return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=WEATHER_COLUMNS)


def meta_frame(metas: Iterable[TransformerMeta]) -> pd.DataFrame:
    rows = []
    for m in metas:
        t = m.thermal
        rows.append({
            "transformer_id": m.transformer_id,
            "rated_kva": m.rated_power,
            "rated_phase_amps": m.rated_phase_current,
            "num_customers": m.num_customers,
            "dtheta_to_r": t.rated_top_oil_rise,
            "dtheta_h_r": t.rated_hotspot_rise,
            "loss_ratio": t.loss_ratio,
            "n_exp": t.oil_exponent,
            "m_exp": t.winding_exponent,
            "tau_oil_min": t.tau_oil,
            "tau_wind_min": t.tau_winding,
        })
    return pd.DataFrame(rows, columns=META_COLUMNS)


def export_fleet(fleet: FleetData, directory: Path, file_names: Dict[str, str]) -> Dict[str, Path]:
    """Write loads/weather/meta CSVs and the holiday list; returns the written paths."""
    directory.mkdir(parents=True, exist_ok=True)
    paths = {key: directory / name for key, name in file_names.items()}
    CsvHandler.save_csv(paths["loads"], loads_frame(fleet.loads[t] for t in fleet.transformer_ids))
    CsvHandler.save_csv(paths["weather"], weather_frame(fleet.weather[s] for s in sorted(fleet.weather)))
    CsvHandler.save_csv(paths["meta"], meta_frame(fleet.metas[t] for t in fleet.transformer_ids))
    CsvHandler.save_lines(paths["holidays"], [d.isoformat() for d in sorted(fleet.holidays)])
    return paths
