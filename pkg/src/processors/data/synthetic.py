# src/processors/data/synthetic.py
"""
Seeded synthetic fleet standing in for utility LV monitoring data.

Each transformer gets a base load scaled to its rating, additive evening-peaked
daily and weekend shapes, a negative linear temperature coupling, a per-phase
unbalance drawn per transformer and auto-correlated noise. Weather is a shared
seasonal sinusoid plus per-site AR(1) noise; the forecast temperature adds
N(0, forecast_sigma²) to the truth.

With the default thermal parameters and winter ambients the labels land in
k* ≈ 1.47 to 1.64 (median near 1.545), none in [1.0, 1.4].
"""
from datetime import date, timedelta
from typing import List, Set

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from src.config import SyntheticConfig, ThermalConfig
from src.processors.data.records import (
    SAMPLES_PER_DAY,
    FleetData,
    LoadSeries,
    TransformerMeta,
    WeatherSeries,
    rated_phase_current_from_kva,
)
from src.processors.physics.thermal import ThermalParams
from src.utils import Log, measure_time
from src.utils.exceptions import ParameterError

MIN_DAYS = 15
MIN_TOTAL_PU = 0.02


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    """Stationary AR(1) path with marginal standard deviation `sigma`."""
    shocks = rng.normal(0.0, sigma * np.sqrt(1.0 - phi * phi), size=n)
    shocks[0] = rng.normal(0.0, sigma)
    return lfilter([1.0], [1.0, -phi], shocks)


def _daily_shape(hours: np.ndarray, evening: float) -> np.ndarray:
    evening_peak = np.exp(-0.5 * ((hours - 18.0) / 1.6) ** 2)
    morning_peak = 0.45 * np.exp(-0.5 * ((hours - 8.0) / 1.4) ** 2)
    night_trough = 0.35 * np.exp(-0.5 * ((hours - 3.5) / 2.0) ** 2)
    return evening * (evening_peak + morning_peak - night_trough)


def uk_bank_holidays(start: date, end: date) -> Set[date]:
    """Fixed-date winter bank holidays (Christmas, Boxing Day, New Year) inside [start, end]."""
    holidays = set()
    for year in range(start.year, end.year + 1):
        for month, day in ((12, 25), (12, 26), (1, 1)):
            d = date(year, month, day)
            if start <= d <= end:
                holidays.add(d)
    return holidays


class SyntheticFleetGenerator:
    """Deterministic fleet generator; one independent random stream per transformer."""

    def __init__(self, config: SyntheticConfig, thermal: ThermalConfig = ThermalConfig()):
        self.config = config
        self.thermal = ThermalParams.from_config(thermal)

    @measure_time
    def generate(self, seed: int, n_transformers: int, n_days: int) -> FleetData:
        if n_transformers < 1:
            raise ParameterError("At least one transformer is required")
        if n_days < MIN_DAYS:
            raise ParameterError(f"At least {MIN_DAYS} days are required (7-day lags plus history)")

        cfg = self.config
        start = date.fromisoformat(cfg.start_date)
        dates = [start + timedelta(days=i) for i in range(n_days)]
        holidays = uk_bank_holidays(dates[0], dates[-1])

        root = np.random.SeedSequence(seed)
        streams = root.spawn(n_transformers)
        width = max(3, len(str(n_transformers)))
        ids = [f"T{i:0{width}d}" for i in range(1, n_transformers + 1)]

        doy = np.array([d.timetuple().tm_yday for d in dates], dtype=float)
        seasonal = cfg.seasonal_mean - cfg.seasonal_amplitude * np.cos(2 * np.pi * (doy - cfg.coldest_day_of_year) / 365.25)

        metas, loads, weather = {}, {}, {}
        for tid, stream in zip(ids, streams):
            rng = np.random.default_rng(stream)
            meta = self._draw_meta(rng, tid)
            site = self._draw_weather(rng, tid, dates, seasonal)
            metas[tid] = meta
            weather[tid] = site
            loads[tid] = self._draw_loads(rng, meta, dates, site.ambient_true, holidays)

        Log.info(f"Generated synthetic fleet: {n_transformers} transformers x {n_days} days (seed {seed})")
        return FleetData(metas=metas, loads=loads, weather=weather, holidays=holidays)

    def _draw_meta(self, rng: np.random.Generator, tid: str) -> TransformerMeta:
        rated_kva = float(rng.choice(np.asarray(self.config.rated_kva_choices, dtype=float)))
        customers = max(1, int(round(rated_kva * rng.uniform(0.25, 0.6))))
        return TransformerMeta(
            transformer_id=tid,
            rated_power=rated_kva,
            rated_phase_current=rated_phase_current_from_kva(rated_kva),
            num_customers=customers,
            thermal=self.thermal,
        )

    def _draw_weather(self, rng: np.random.Generator, tid: str, dates: List[date], seasonal: np.ndarray) -> WeatherSeries:
        cfg = self.config
        truth = seasonal + _ar1(rng, len(dates), cfg.site_noise_phi, cfg.site_noise_sigma)
        truth = np.clip(truth, -30.0, 50.0)
        forecast = truth + rng.normal(0.0, cfg.forecast_sigma, size=len(dates))
        return WeatherSeries(site_id=tid, dates=dates, ambient_true=truth, ambient_forecast=forecast)

    def _draw_loads(self, rng: np.random.Generator, meta: TransformerMeta, dates: List[date],
                    ambient: np.ndarray, holidays: Set[date]) -> LoadSeries:
        cfg = self.config
        n_days = len(dates)
        n = n_days * SAMPLES_PER_DAY

        base = rng.uniform(*cfg.base_load_range)
        evening = rng.uniform(*cfg.evening_peak_range)
        unbalance = cfg.unbalance * rng.uniform(0.5, 1.5)
        z = rng.normal(size=3)
        z -= z.mean()
        z /= max(np.abs(z).max(), 1e-12)
        shares = 1.0 + unbalance * z

        hours = np.tile(np.arange(SAMPLES_PER_DAY) / 2.0, n_days)
        day_index = np.repeat(np.arange(n_days), SAMPLES_PER_DAY)
        weekend = np.array([d.weekday() >= 5 or d in holidays for d in dates], dtype=float)

        daily_level = _ar1(rng, n_days, cfg.daily_noise_phi, cfg.daily_noise_sigma)
        coupling = -cfg.temperature_coupling * (ambient - cfg.reference_temperature)
        total_pu = (
            base
            + _daily_shape(hours, evening)
            + cfg.weekend_shift * weekend[day_index]
            + coupling[day_index]
            + daily_level[day_index]
            + _ar1(rng, n, cfg.noise_phi, cfg.noise_sigma)
        )
        total_pu = np.maximum(total_pu, MIN_TOTAL_PU)

        phase_noise = unbalance * rng.normal(0.0, cfg.noise_sigma, size=(n, 3))
        currents = (total_pu[:, None] * shares[None, :] + phase_noise) * meta.rated_phase_current
        currents = np.maximum(currents, 0.0)

        timestamps = pd.date_range(start=pd.Timestamp(dates[0]), periods=n, freq="30min")
        return LoadSeries(transformer_id=meta.transformer_id, timestamps=timestamps, currents=currents)


def generate_synthetic_fleet(seed: int, n_transformers: int, n_days: int, config: SyntheticConfig,
                             thermal: ThermalConfig = ThermalConfig()) -> FleetData:
    return SyntheticFleetGenerator(config, thermal).generate(seed, n_transformers, n_days)
