# src/processors/physics/__init__.py
"""
Physics Sub-package
===================
Transformer thermal model, relay thermal element and the retrospective
optimal scale factor search built on both.

Modules:
--------
1. thermal.py
   - Two-step equivalent load (RMS per period, 90% floor on the peak).
   - Winding/top-oil load factor split and exponential-response hotspot.

2. relay.py
   - Scaled rating and dual time constant trip current.

3. labeler.py
   - hotspot_at_k, optimal_scale_factor (bounded Brent), FleetLabeler.
"""

from .thermal import (
    DayWindow,
    HotspotBreakdown,
    LoadFactors,
    PeriodEquivalents,
    ThermalParams,
    equivalent_load_factors,
    hotspot_breakdown,
    hotspot_temperature,
    period_equivalents,
)
from .relay import RelaySettings, scaled_rating, trip_current
from .labeler import (
    BoundaryFlag,
    DayInputs,
    FleetLabeler,
    LabelRecord,
    SearchBounds,
    build_day_inputs,
    hotspot_at_k,
    optimal_scale_factor,
)

__all__ = [
    "DayWindow",
    "HotspotBreakdown",
    "LoadFactors",
    "PeriodEquivalents",
    "ThermalParams",
    "equivalent_load_factors",
    "hotspot_breakdown",
    "hotspot_temperature",
    "period_equivalents",
    "RelaySettings",
    "scaled_rating",
    "trip_current",
    "BoundaryFlag",
    "DayInputs",
    "FleetLabeler",
    "LabelRecord",
    "SearchBounds",
    "build_day_inputs",
    "hotspot_at_k",
    "optimal_scale_factor",
]
