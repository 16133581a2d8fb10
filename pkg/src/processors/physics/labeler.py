# src/processors/physics/labeler.py
"""
Retrospective optimal scale factor per (transformer, day).

For a candidate k the relay trip current replaces the peak-period equivalent of
the most loaded phase, the other phases are scaled by the same ratio, and the
thermal model gives the resulting hotspot. k* is the scale factor whose hotspot
sits on the limit, found with a bounded Brent search.
"""
from dataclasses import dataclass
from datetime import date
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from tqdm import tqdm

from src.processors.physics.relay import RelaySettings, trip_current, min_scale_factor
from src.processors.physics.thermal import (
    DayWindow,
    LoadFactors,
    PeriodEquivalents,
    ThermalParams,
    hotspot_temperature,
    period_equivalents,
)
from src.utils import Log, measure_time
from src.utils.exceptions import AlreadyTrippingError, GapError, InvariantViolation

BRENT_XTOL = 1e-10


class BoundaryFlag(str, Enum):
    INTERIOR_ROOT = "interior_root"
    CLAMPED_LOW = "clamped_low"
    CLAMPED_HIGH = "clamped_high"


@dataclass(frozen=True)
class SearchBounds:
    k_min: float = 0.5
    k_max: float = 2.5
    hotspot_limit: float = 140.0
    tolerance: float = 0.01

    @classmethod
    def from_config(cls, section) -> "SearchBounds":
        return cls(section.k_min, section.k_max, section.hotspot_limit, section.tolerance)


@dataclass(frozen=True)
class DayInputs:
    transformer_id: str
    day: date
    equivalents: PeriodEquivalents
    ambient: float
    params: ThermalParams
    window: DayWindow
    rated_phase_current: float

    @property
    def preload(self) -> float:
        """Relay preload: off-peak equivalent of the most loaded phase."""
        return float(max(self.equivalents.offpeak))

    @property
    def peak_duration(self) -> float:
        return self.window.peak_duration

    def observed_factors(self) -> LoadFactors:
        return self.equivalents.to_factors(self.rated_phase_current)

    def with_ambient(self, ambient: float) -> "DayInputs":
        return DayInputs(self.transformer_id, self.day, self.equivalents, float(ambient),
                         self.params, self.window, self.rated_phase_current)


@dataclass(frozen=True)
class LabelRecord:
    transformer_id: str
    date: date
    ambient: float
    factors: LoadFactors
    k_opt: float
    boundary_flag: BoundaryFlag

    def as_row(self) -> Dict[str, object]:
        return {
            "transformer_id": self.transformer_id,
            "date": self.date.isoformat(),
            "ambient": self.ambient,
            "k_oil_offpeak": self.factors.k_oil_offpeak,
            "k_oil_peak": self.factors.k_oil_peak,
            "k_winding_offpeak": self.factors.k_winding_offpeak,
            "k_winding_peak": self.factors.k_winding_peak,
            "k_opt": self.k_opt,
            "boundary_flag": self.boundary_flag.value,
        }


LABEL_COLUMNS = ["transformer_id", "date", "ambient", "k_oil_offpeak", "k_oil_peak",
                 "k_winding_offpeak", "k_winding_peak", "k_opt", "boundary_flag"]


def relay_trip_current(k: float, inputs: DayInputs) -> float:
    settings = RelaySettings(scale_factor=k, rated_phase_current=inputs.rated_phase_current)
    return trip_current(settings, inputs.preload, inputs.peak_duration,
                        inputs.params.tau_winding, inputs.params.tau_oil)


def factors_at_trip(i_trip: float, inputs: DayInputs) -> LoadFactors:
    """Peak factors with the most loaded phase at `i_trip`, the others scaled proportionally."""
    rated = inputs.rated_phase_current
    offpeak = np.asarray(inputs.equivalents.offpeak, dtype=float)
    peak = np.asarray(inputs.equivalents.peak, dtype=float)
    peak_max = peak.max()
    if peak_max > 0:
        scaled = peak * (i_trip / peak_max)
    else:
        # no observed peak shape: treat the phases as balanced
        scaled = np.full(3, i_trip)
    return LoadFactors(
        k_oil_offpeak=float(offpeak.mean()) / rated,
        k_oil_peak=float(scaled.mean()) / rated,
        k_winding_offpeak=float(offpeak.max()) / rated,
        k_winding_peak=float(i_trip) / rated,
    )


def hotspot_at_k(k: float, inputs: DayInputs) -> float:
    i_trip = relay_trip_current(k, inputs)
    factors = factors_at_trip(i_trip, inputs)
    return hotspot_temperature(factors, inputs.ambient, inputs.params, inputs.peak_duration)


def admissible_k_floor(inputs: DayInputs) -> float:
    """Smallest k for which the relay does not already trip on the preload."""
    return min_scale_factor(inputs.preload, inputs.rated_phase_current, inputs.peak_duration,
                            inputs.params.tau_winding, inputs.params.tau_oil)


def optimal_scale_factor(inputs: DayInputs, bounds: SearchBounds = SearchBounds()) -> LabelRecord:
    limit = bounds.hotspot_limit

    def excess(k: float) -> float:
        return hotspot_at_k(k, inputs) - limit

    def record(k: float, flag: BoundaryFlag) -> LabelRecord:
        return LabelRecord(inputs.transformer_id, inputs.day, inputs.ambient,
                           inputs.observed_factors(), float(k), flag)

    floor = admissible_k_floor(inputs)
    k_low = max(bounds.k_min, floor * (1.0 + 1e-9) + 1e-12)
    if k_low >= bounds.k_max:
        return record(bounds.k_min, BoundaryFlag.CLAMPED_LOW)

    f_high = excess(bounds.k_max)
    if f_high < 0:
        return record(bounds.k_max, BoundaryFlag.CLAMPED_HIGH)
    f_low = excess(k_low)
    if f_low > 0:
        return record(bounds.k_min, BoundaryFlag.CLAMPED_LOW)
    if f_low == 0:
        return record(k_low, BoundaryFlag.INTERIOR_ROOT)

    try:
        k_opt = brentq(excess, k_low, bounds.k_max, xtol=BRENT_XTOL, maxiter=200)
    except ValueError as e:
        raise InvariantViolation(f"{inputs.transformer_id} {inputs.day}: non-monotone bracket ({e})") from e

    residual = excess(k_opt)
    if abs(residual) > bounds.tolerance:
        raise InvariantViolation(
            f"{inputs.transformer_id} {inputs.day}: Brent root misses the limit by {residual:.4f} °C"
        )
    return record(k_opt, BoundaryFlag.INTERIOR_ROOT)


def build_day_inputs(fleet, transformer_id: str, day: date, window: DayWindow,
                     ambient: Optional[float] = None) -> DayInputs:
    """Assemble DayInputs from fleet records; `ambient` defaults to the true daily value."""
    meta = fleet.metas[transformer_id]
    series = fleet.loads[transformer_id]
    if ambient is None:
        ambient = fleet.weather_for(transformer_id).true_on(day)
    return DayInputs(
        transformer_id=transformer_id,
        day=day,
        equivalents=period_equivalents(series, window, day),
        ambient=float(ambient),
        params=meta.thermal,
        window=window,
        rated_phase_current=meta.rated_phase_current,
    )


class FleetLabeler:
    """
    Labels every complete (transformer, day) of a fleet. Days whose windows
    have gaps are excluded and counted.
    """

    def __init__(self, window: DayWindow, bounds: SearchBounds):
        self.window = window
        self.bounds = bounds

    @measure_time
    def run(self, fleet) -> Tuple[pd.DataFrame, Dict[Tuple[str, date], DayInputs]]:
        records: List[Dict[str, object]] = []
        day_inputs: Dict[Tuple[str, date], DayInputs] = {}
        gaps = 0
        tripping = 0

        for tid in tqdm(fleet.transformer_ids, desc="Labeling", disable=Log.progress_disabled()):
            for day in fleet.loads[tid].dates():
                try:
                    inputs = build_day_inputs(fleet, tid, day, self.window)
                    label = optimal_scale_factor(inputs, self.bounds)
                except GapError:
                    gaps += 1
                    continue
                except AlreadyTrippingError:
                    tripping += 1
                    continue
                day_inputs[(tid, day)] = inputs
                records.append(label.as_row())

        labels = pd.DataFrame.from_records(records, columns=LABEL_COLUMNS)
        if gaps:
            Log.warning(f"Excluded {gaps} day(s) with incomplete off-peak/peak windows")
        if tripping:
            Log.warning(f"Excluded {tripping} day(s) where the preload alone trips the relay")
        if len(labels):
            counts = labels["boundary_flag"].value_counts().to_dict()
            Log.info(f"Labeled {len(labels)} days; boundary flags: {counts}")
            interior = labels[labels["boundary_flag"] == BoundaryFlag.INTERIOR_ROOT.value]["k_opt"]
            if len(interior):
                Log.info(f"k* range (interior): {interior.min():.3f} - {interior.max():.3f}, mean {interior.mean():.3f}")
        return labels, day_inputs


def equivalents_frame(day_inputs: Dict[Tuple[str, date], DayInputs]) -> pd.DataFrame:
    """Per-day equivalent currents, one row per (transformer, day)."""
    rows = []
    for (tid, day), inputs in sorted(day_inputs.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        eq = inputs.equivalents
        rows.append({
            "transformer_id": tid,
            "date": day.isoformat(),
            "offpeak_eq_a": eq.offpeak[0], "offpeak_eq_b": eq.offpeak[1], "offpeak_eq_c": eq.offpeak[2],
            "peak_eq_a": eq.peak[0], "peak_eq_b": eq.peak[1], "peak_eq_c": eq.peak[2],
        })
    return pd.DataFrame(rows)
