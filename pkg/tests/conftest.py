# tests/conftest.py
from dataclasses import replace
from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest

from src.config import SyntheticConfig
from src.processors.data import generate_synthetic_fleet
from src.processors.data.records import LoadSeries
from src.processors.learning.features import FeatureBuilder, summarise_days
from src.processors.physics.labeler import DayInputs, FleetLabeler, SearchBounds
from src.processors.physics.thermal import DayWindow, PeriodEquivalents, ThermalParams
from src.utils import Log

MONDAY = date(2025, 2, 3)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run fleet-scale acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def quiet_logs():
    Log.set_level("warning")
    yield
    Log.set_level("info")


@pytest.fixture
def params():
    return ThermalParams()


@pytest.fixture
def window():
    return DayWindow()


@pytest.fixture
def make_inputs():
    """DayInputs from per-unit equivalents (scalar = balanced, or a 3-tuple per phase)."""
    def _make(offpeak=0.8, peak=1.0, ambient=5.0, rated=100.0, params=None, tid="T001", day=MONDAY):
        def amps(value):
            values = (value,) * 3 if np.isscalar(value) else tuple(value)
            return tuple(float(v) * rated for v in values)
        return DayInputs(
            transformer_id=tid,
            day=day,
            equivalents=PeriodEquivalents(offpeak=amps(offpeak), peak=amps(peak)),
            ambient=float(ambient),
            params=params or ThermalParams(),
            window=DayWindow(),
            rated_phase_current=float(rated),
        )
    return _make


@pytest.fixture
def make_series():
    """
    Half-hourly series over whole days: `offpeak` amps from 05:00 to 17:00,
    `peak` amps from 17:00 to 20:00, `other` elsewhere (defaults to offpeak).
    """
    def _make(days, offpeak, peak, other=None, tid="T001"):
        offpeak = np.broadcast_to(np.asarray(offpeak, dtype=float), (3,))
        peak = np.broadcast_to(np.asarray(peak, dtype=float), (3,))
        other = offpeak if other is None else np.broadcast_to(np.asarray(other, dtype=float), (3,))
        start = pd.Timestamp(days[0])
        timestamps = pd.date_range(start, periods=48 * len(days), freq="30min")
        hours = timestamps.hour + timestamps.minute / 60.0
        currents = np.tile(other, (len(timestamps), 1))
        currents[(hours >= 5) & (hours < 17)] = offpeak
        currents[(hours >= 17) & (hours < 20)] = peak
        return LoadSeries(transformer_id=tid, timestamps=timestamps, currents=currents)
    return _make


@pytest.fixture(scope="session")
def small_fleet():
    return generate_synthetic_fleet(11, 4, 40, SyntheticConfig(start_date="2024-12-01"))


@pytest.fixture(scope="session")
def labeled_fleet(small_fleet):
    """(labels, day_inputs, feature table) of the small fleet."""
    window = DayWindow()
    labels, day_inputs = FleetLabeler(window, SearchBounds()).run(small_fleet)
    summary = summarise_days(small_fleet, window)
    table = FeatureBuilder(small_fleet).build_table(labels, summary)
    return labels, day_inputs, table


def consecutive_days(start: date, n: int):
    return [start + timedelta(days=i) for i in range(n)]


@pytest.fixture
def days():
    return consecutive_days


@pytest.fixture
def synthetic_config():
    def _make(**overrides):
        return replace(SyntheticConfig(), **overrides)
    return _make
