# tests/test_relay.py
import math

import numpy as np
import pytest

from src.processors.physics.relay import (
    RelaySettings,
    memory_weight,
    min_scale_factor,
    scaled_rating,
    trip_current,
)
from src.utils.exceptions import AlreadyTrippingError, ParameterError

TAU_W, TAU_O = 7.0, 180.0


def thermal_image(trip: float, preload: float, t: float) -> float:
    """Squared-current image of a step from `preload` to `trip` after t minutes."""
    w = 0.4 * math.exp(-t / TAU_W) + 0.6 * math.exp(-t / TAU_O)
    return trip * trip + (preload * preload - trip * trip) * w


@pytest.mark.parametrize("k, rated, expected", [(1.0, 200.0, 200.0), (1.05, 200.0, 210.0), (1.127, 100.0, 112.7)])
def test_scaled_rating(k, rated, expected):
    assert scaled_rating(RelaySettings(k, rated)) == pytest.approx(expected)


@pytest.mark.parametrize("t", [1.0, 30.0, 180.0, 600.0])
def test_preload_at_rating_is_a_fixed_point(t):
    settings = RelaySettings(1.05, 200.0)
    rating = scaled_rating(settings)
    assert trip_current(settings, rating, t, TAU_W, TAU_O) == pytest.approx(rating, rel=1e-12)


def test_long_horizon_converges_to_rating():
    settings = RelaySettings(1.05, 200.0)
    result = trip_current(settings, 150.0, 1e6 * TAU_O, TAU_W, TAU_O)
    assert result == pytest.approx(210.0, rel=1e-6)


def test_trip_current_back_substitution():
    settings = RelaySettings(1.05, 200.0)
    trip = trip_current(settings, 150.0, 180.0, TAU_W, TAU_O)
    assert trip > 210.0
    assert thermal_image(trip, 150.0, 180.0) == pytest.approx(210.0 ** 2, rel=1e-12)
    # the image is still below the limit earlier in the window
    assert thermal_image(trip, 150.0, 90.0) < 210.0 ** 2


def test_preload_above_boundary_already_trips():
    settings = RelaySettings(1.0, 100.0)
    with pytest.raises(AlreadyTrippingError):
        trip_current(settings, 200.0, 30.0, TAU_W, TAU_O)


def test_min_scale_factor_marks_the_real_solution_boundary():
    preload, rated, t = 180.0, 100.0, 60.0
    k_min = min_scale_factor(preload, rated, t, TAU_W, TAU_O)
    assert k_min == pytest.approx(preload * math.sqrt(memory_weight(t, TAU_W, TAU_O)) / rated)
    trip_current(RelaySettings(k_min * 1.001, rated), preload, t, TAU_W, TAU_O)
    with pytest.raises(AlreadyTrippingError):
        trip_current(RelaySettings(k_min * 0.999, rated), preload, t, TAU_W, TAU_O)


def test_monotone_in_scale_factor():
    values = [trip_current(RelaySettings(k, 100.0), 80.0, 180.0, TAU_W, TAU_O) for k in np.linspace(0.8, 2.5, 30)]
    assert np.all(np.diff(values) > 0)


def test_non_increasing_in_preload():
    settings = RelaySettings(1.2, 100.0)
    values = [trip_current(settings, p, 180.0, TAU_W, TAU_O) for p in np.linspace(0.0, 120.0, 25)]
    assert np.all(np.diff(values) <= 1e-12)


def test_non_increasing_in_time():
    settings = RelaySettings(1.2, 100.0)
    values = [trip_current(settings, 60.0, t, TAU_W, TAU_O) for t in np.linspace(5.0, 1000.0, 40)]
    assert np.all(np.diff(values) <= 1e-12)


def test_invalid_inputs():
    with pytest.raises(ParameterError):
        RelaySettings(0.0, 100.0)
    with pytest.raises(ParameterError):
        RelaySettings(1.0, -5.0)
    with pytest.raises(ParameterError):
        trip_current(RelaySettings(1.0, 100.0), 50.0, 0.0, TAU_W, TAU_O)
    with pytest.raises(ParameterError):
        trip_current(RelaySettings(1.0, 100.0), -1.0, 60.0, TAU_W, TAU_O)
