# src/processors/data/__init__.py
"""
Data Sub-package
================
Fleet records, CSV ingestion/export, the seeded synthetic fleet generator and
the chronological train/holdout split.

Modules:
--------
- records.py: TransformerMeta, LoadSeries, WeatherSeries, SplitSpec, FleetData
- ingest.py: ingest_loads / ingest_weather / ingest_meta / ingest_holidays, load_fleet, export_fleet
- synthetic.py: SyntheticFleetGenerator, generate_synthetic_fleet
- splitter.py: split_dates, split
"""

from .records import FleetData, LoadSeries, SplitSpec, TransformerMeta, WeatherSeries
from .ingest import export_fleet, ingest_holidays, ingest_loads, ingest_meta, ingest_weather, load_fleet
from .synthetic import SyntheticFleetGenerator, generate_synthetic_fleet
from .splitter import split, split_dates

__all__ = [
    "FleetData",
    "LoadSeries",
    "SplitSpec",
    "TransformerMeta",
    "WeatherSeries",
    "export_fleet",
    "ingest_holidays",
    "ingest_loads",
    "ingest_meta",
    "ingest_weather",
    "load_fleet",
    "SyntheticFleetGenerator",
    "generate_synthetic_fleet",
    "split",
    "split_dates",
]
