# src/processors/physics/thermal.py
"""
Two-step equivalent-load hotspot model for distribution transformers.

The day is reduced to an off-peak period (the 12 h before the peak) and the
peak period. Each phase gets an RMS equivalent current per period; the winding
factor uses the most loaded phase and the top-oil factor the phase mean. Rises
follow the exponential-response form of the loading guide: the off-peak
factors set the initial rise, the peak factors the ultimate rise, evaluated at
the end of the peak period.
"""
import math
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta
from typing import TYPE_CHECKING, Tuple

import numpy as np
import pandas as pd

from src.utils.exceptions import GapError, ParameterError

if TYPE_CHECKING:
    from src.processors.data.records import LoadSeries

PEAK_FLOOR_FRACTION = 0.9


@dataclass(frozen=True)
class ThermalParams:
    rated_top_oil_rise: float = 55.0   # K, top oil over ambient at rated load
    rated_hotspot_rise: float = 23.0   # K, hotspot over top oil at rated load
    loss_ratio: float = 5.0            # load loss / no-load loss at rated load
    oil_exponent: float = 0.8          # n
    winding_exponent: float = 0.8      # m
    tau_oil: float = 180.0             # minutes
    tau_winding: float = 7.0           # minutes

    def __post_init__(self):
        values = (self.rated_top_oil_rise, self.rated_hotspot_rise, self.loss_ratio,
                  self.oil_exponent, self.winding_exponent, self.tau_oil, self.tau_winding)
        if any(not math.isfinite(v) or v <= 0 for v in values):
            raise ParameterError(f"Thermal parameters must be strictly positive: {self}")
        if self.oil_exponent > 1 or self.winding_exponent > 1:
            raise ParameterError("Oil and winding exponents must lie in (0, 1]")
        if self.tau_winding >= self.tau_oil:
            raise ParameterError("Winding time constant must be shorter than the oil time constant")

    @classmethod
    def from_config(cls, section) -> "ThermalParams":
        return cls(
            rated_top_oil_rise=section.rated_top_oil_rise,
            rated_hotspot_rise=section.rated_hotspot_rise,
            loss_ratio=section.loss_ratio,
            oil_exponent=section.oil_exponent,
            winding_exponent=section.winding_exponent,
            tau_oil=section.tau_oil,
            tau_winding=section.tau_winding,
        )


@dataclass(frozen=True)
class LoadFactors:
    k_oil_offpeak: float
    k_oil_peak: float
    k_winding_offpeak: float
    k_winding_peak: float

    def __post_init__(self):
        values = (self.k_oil_offpeak, self.k_oil_peak, self.k_winding_offpeak, self.k_winding_peak)
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise ParameterError(f"Load factors must be finite and non-negative: {self}")
        # max phase >= mean phase, allowing for float round-off
        if (self.k_winding_offpeak < self.k_oil_offpeak * (1 - 1e-12)
                or self.k_winding_peak < self.k_oil_peak * (1 - 1e-12)):
            raise ParameterError(f"Winding factor below oil factor: {self}")


@dataclass(frozen=True)
class DayWindow:
    peak_start: time = time(17, 0)
    peak_end: time = time(20, 0)
    offpeak_hours: float = 12.0
    sample_minutes: int = 30

    def __post_init__(self):
        if self.offpeak_hours != 12:
            raise ParameterError("The off-peak window is the 12 h immediately before the peak")
        if self.sample_minutes <= 0:
            raise ParameterError("Sample cadence must be positive")

    @classmethod
    def from_config(cls, section) -> "DayWindow":
        return cls(
            peak_start=_parse_clock(section.peak_start),
            peak_end=_parse_clock(section.peak_end),
            offpeak_hours=float(section.offpeak_hours),
            sample_minutes=int(section.sample_minutes),
        )

    @property
    def peak_duration(self) -> float:
        """Peak length in minutes; an end at or before the start wraps past midnight."""
        start = self.peak_start.hour * 60 + self.peak_start.minute
        end = self.peak_end.hour * 60 + self.peak_end.minute
        duration = (end - start) % (24 * 60)
        return float(duration if duration > 0 else 24 * 60)

    @property
    def offpeak_samples(self) -> int:
        return int(round(self.offpeak_hours * 60 / self.sample_minutes))

    @property
    def peak_samples(self) -> int:
        return int(round(self.peak_duration / self.sample_minutes))

    def bounds(self, day: date) -> Tuple[pd.Timestamp, pd.Timestamp, pd.Timestamp]:
        """(off-peak start, peak start, peak end) for the peak beginning on `day`."""
        peak_start = pd.Timestamp(datetime.combine(day, self.peak_start))
        peak_end = peak_start + timedelta(minutes=self.peak_duration)
        offpeak_start = peak_start - timedelta(hours=self.offpeak_hours)
        return offpeak_start, peak_start, peak_end


def _parse_clock(value) -> time:
    if isinstance(value, time):
        return value
    try:
        hours, minutes = str(value).split(":")
        return time(int(hours), int(minutes))
    except ValueError as e:
        raise ParameterError(f"Invalid clock time '{value}', expected HH:MM") from e


@dataclass(frozen=True)
class PeriodEquivalents:
    """Per-phase equivalent currents (A) for the off-peak and peak periods."""
    offpeak: Tuple[float, float, float]
    peak: Tuple[float, float, float]

    def to_factors(self, rated_phase_current: float) -> LoadFactors:
        if not rated_phase_current > 0:
            raise ParameterError("Rated phase current must be positive")
        return LoadFactors(
            k_oil_offpeak=float(np.mean(self.offpeak)) / rated_phase_current,
            k_oil_peak=float(np.mean(self.peak)) / rated_phase_current,
            k_winding_offpeak=float(max(self.offpeak)) / rated_phase_current,
            k_winding_peak=float(max(self.peak)) / rated_phase_current,
        )


def _window_samples(series: "LoadSeries", start: pd.Timestamp, end: pd.Timestamp, expected: int, label: str) -> np.ndarray:
    timestamps = series.timestamps
    lo = timestamps.searchsorted(start, side="left")
    hi = timestamps.searchsorted(end, side="left")
    block = series.currents[lo:hi]
    if hi - lo != expected or np.isnan(block).any():
        raise GapError(
            f"{series.transformer_id}: {label} window {start} - {end} has "
            f"{hi - lo} of {expected} samples"
        )
    return block


def window_blocks(series: "LoadSeries", window: DayWindow, day: date) -> Tuple[np.ndarray, np.ndarray]:
    """Raw (off-peak, peak) samples of shape (n, 3); GapError when either window is incomplete."""
    offpeak_start, peak_start, peak_end = window.bounds(day)
    offpeak = _window_samples(series, offpeak_start, peak_start, window.offpeak_samples, "off-peak")
    peak = _window_samples(series, peak_start, peak_end, window.peak_samples, "peak")
    return offpeak, peak


def period_equivalents(series: "LoadSeries", window: DayWindow, day: date) -> PeriodEquivalents:
    offpeak, peak = window_blocks(series, window, day)

    offpeak_rms = np.sqrt(np.mean(offpeak ** 2, axis=0))
    peak_rms = np.sqrt(np.mean(peak ** 2, axis=0))
    peak_eq = np.maximum(peak_rms, PEAK_FLOOR_FRACTION * peak.max(axis=0))
    return PeriodEquivalents(
        offpeak=tuple(float(v) for v in offpeak_rms),
        peak=tuple(float(v) for v in peak_eq),
    )


def equivalent_load_factors(series: "LoadSeries", window: DayWindow,
                            rated_phase_current: float, day: date) -> LoadFactors:
    if not rated_phase_current > 0:
        raise ParameterError("Rated phase current must be positive")
    return period_equivalents(series, window, day).to_factors(rated_phase_current)


@dataclass(frozen=True)
class HotspotBreakdown:
    ambient: float
    top_oil_rise: float
    hotspot_rise: float

    @property
    def hotspot(self) -> float:
        return self.ambient + self.top_oil_rise + self.hotspot_rise


def _steady_oil_rise(k_oil: float, params: ThermalParams) -> float:
    r = params.loss_ratio
    return params.rated_top_oil_rise * ((k_oil * k_oil * r + 1.0) / (r + 1.0)) ** params.oil_exponent


def _steady_winding_rise(k_winding: float, params: ThermalParams) -> float:
    return params.rated_hotspot_rise * k_winding ** (2.0 * params.winding_exponent)


def hotspot_breakdown(factors: LoadFactors, ambient: float, params: ThermalParams,
                      peak_duration: float) -> HotspotBreakdown:
    if not peak_duration > 0:
        raise ParameterError("Peak duration must be positive")

    oil_initial = _steady_oil_rise(factors.k_oil_offpeak, params)
    oil_ultimate = _steady_oil_rise(factors.k_oil_peak, params)
    wind_initial = _steady_winding_rise(factors.k_winding_offpeak, params)
    wind_ultimate = _steady_winding_rise(factors.k_winding_peak, params)

    oil = oil_initial + (oil_ultimate - oil_initial) * (1.0 - math.exp(-peak_duration / params.tau_oil))
    wind = wind_initial + (wind_ultimate - wind_initial) * (1.0 - math.exp(-peak_duration / params.tau_winding))
    return HotspotBreakdown(ambient=float(ambient), top_oil_rise=oil, hotspot_rise=wind)


def hotspot_temperature(factors: LoadFactors, ambient: float, params: ThermalParams,
                        peak_duration: float) -> float:
    return hotspot_breakdown(factors, ambient, params, peak_duration).hotspot
