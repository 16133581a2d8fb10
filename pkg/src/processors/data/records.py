# src/processors/data/records.py
"""
In-memory records for one fleet: transformer metadata, half-hourly per-phase
load series, daily weather and the holiday calendar.
"""
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Optional, Set

import numpy as np
import pandas as pd

from src.processors.physics.thermal import ThermalParams
from src.utils.exceptions import DataValidationError, ParameterError

NOMINAL_LV_VOLTAGE = 400.0
SAMPLES_PER_DAY = 48
AMBIENT_RANGE = (-30.0, 50.0)


def rated_phase_current_from_kva(rated_kva: float, voltage: float = NOMINAL_LV_VOLTAGE) -> float:
    return rated_kva * 1000.0 / (math.sqrt(3.0) * voltage)


@dataclass(frozen=True)
class TransformerMeta:
    transformer_id: str
    rated_power: float           # kVA
    rated_phase_current: float   # A
    num_customers: int
    thermal: ThermalParams = field(default_factory=ThermalParams)
    site_id: Optional[str] = None    # weather site; the transformer id when absent

    def __post_init__(self):
        if not (25.0 <= self.rated_power <= 1000.0):
            raise DataValidationError(f"{self.transformer_id}: rated power {self.rated_power} kVA outside [25, 1000]")
        expected = rated_phase_current_from_kva(self.rated_power)
        if abs(self.rated_phase_current - expected) > 0.01 * expected:
            raise DataValidationError(
                f"{self.transformer_id}: rated phase current {self.rated_phase_current:.1f} A "
                f"inconsistent with {self.rated_power} kVA at 400 V ({expected:.1f} A)"
            )
        if self.num_customers < 0:
            raise DataValidationError(f"{self.transformer_id}: negative customer count")


@dataclass
class LoadSeries:
    transformer_id: str
    timestamps: pd.DatetimeIndex     # tz-naive UTC, strictly increasing
    currents: np.ndarray             # shape (n, 3): i_a, i_b, i_c in amperes
    incomplete_days: Set[date] = field(default_factory=set)

    def __post_init__(self):
        self.currents = np.asarray(self.currents, dtype=float)
        if self.currents.ndim != 2 or self.currents.shape[1] != 3:
            raise DataValidationError(f"{self.transformer_id}: currents must have shape (n, 3)")
        if len(self.timestamps) != len(self.currents):
            raise DataValidationError(f"{self.transformer_id}: timestamp/current length mismatch")
        if (self.currents < 0).any():
            raise DataValidationError(f"{self.transformer_id}: negative currents")
        if len(self.timestamps) > 1 and not self.timestamps.is_monotonic_increasing:
            raise DataValidationError(f"{self.transformer_id}: timestamps not increasing")

    @property
    def i_a(self) -> np.ndarray:
        return self.currents[:, 0]

    @property
    def i_b(self) -> np.ndarray:
        return self.currents[:, 1]

    @property
    def i_c(self) -> np.ndarray:
        return self.currents[:, 2]

    def dates(self) -> List[date]:
        return sorted(set(self.timestamps.date))

    def complete_dates(self) -> List[date]:
        return [d for d in self.dates() if d not in self.incomplete_days]

    def drop_dates(self, dates: Set[date]) -> "LoadSeries":
        keep = ~np.isin(self.timestamps.date, list(dates))
        return LoadSeries(
            transformer_id=self.transformer_id,
            timestamps=self.timestamps[keep],
            currents=self.currents[keep],
            incomplete_days=set(self.incomplete_days) - set(dates),
        )


@dataclass
class WeatherSeries:
    site_id: str
    dates: List[date]
    ambient_true: np.ndarray
    ambient_forecast: Optional[np.ndarray] = None

    def __post_init__(self):
        self.ambient_true = np.asarray(self.ambient_true, dtype=float)
        lo, hi = AMBIENT_RANGE
        if ((self.ambient_true < lo) | (self.ambient_true > hi)).any():
            raise DataValidationError(f"{self.site_id}: ambient temperature outside [{lo}, {hi}] °C")
        if self.ambient_forecast is not None:
            self.ambient_forecast = np.asarray(self.ambient_forecast, dtype=float)
        self._index = {d: i for i, d in enumerate(self.dates)}

    def true_on(self, day: date) -> float:
        try:
            return float(self.ambient_true[self._index[day]])
        except KeyError:
            raise DataValidationError(f"{self.site_id}: no weather for {day}") from None

    def forecast_on(self, day: date) -> float:
        if self.ambient_forecast is None:
            raise DataValidationError(f"{self.site_id}: no forecast temperatures available")
        value = self.ambient_forecast[self._index[day]]
        return float(value) if np.isfinite(value) else self.true_on(day)


@dataclass(frozen=True)
class SplitSpec:
    train_validation_days: int = 152
    holdout_days: int = 31

    def __post_init__(self):
        if self.train_validation_days <= 0 or self.holdout_days <= 0:
            raise ParameterError("Split day counts must be positive")


@dataclass
class FleetData:
    metas: Dict[str, TransformerMeta]
    loads: Dict[str, LoadSeries]
    weather: Dict[str, WeatherSeries]
    holidays: Set[date] = field(default_factory=set)

    @property
    def transformer_ids(self) -> List[str]:
        return sorted(self.metas)

    def weather_for(self, transformer_id: str) -> WeatherSeries:
        meta = self.metas.get(transformer_id)
        site = meta.site_id if meta is not None and meta.site_id else transformer_id
        try:
            return self.weather[site]
        except KeyError:
            raise DataValidationError(f"No weather series for site '{site}'") from None
