# src/processors/physics/relay.py
"""
Thermal (ANSI 49) element of a numerical relay with a dual time constant
thermal image. The scale factor multiplies the transformer rated phase current
to give the scaled rating; the trip current follows from the preload and the
time allowed before tripping.
"""
import math
from dataclasses import dataclass

from src.utils.exceptions import AlreadyTrippingError, ParameterError

# Weights of the winding and oil exponentials in the relay thermal image.
WINDING_WEIGHT = 0.4
OIL_WEIGHT = 0.6


@dataclass(frozen=True)
class RelaySettings:
    scale_factor: float
    rated_phase_current: float

    def __post_init__(self):
        if not self.scale_factor > 0:
            raise ParameterError(f"Scale factor must be positive, got {self.scale_factor}")
        if not self.rated_phase_current > 0:
            raise ParameterError(f"Rated phase current must be positive, got {self.rated_phase_current}")


def scaled_rating(settings: RelaySettings) -> float:
    return settings.scale_factor * settings.rated_phase_current


def memory_weight(time_to_trip: float, tau_w: float, tau_o: float) -> float:
    """0.4·e^(-t/τw) + 0.6·e^(-t/τo): share of the preload still held by the thermal image at t."""
    return WINDING_WEIGHT * math.exp(-time_to_trip / tau_w) + OIL_WEIGHT * math.exp(-time_to_trip / tau_o)


def trip_current(settings: RelaySettings, preload: float, time_to_trip: float,
                 tau_w: float, tau_o: float) -> float:
    if not time_to_trip > 0:
        raise ParameterError("Time to trip must be positive")
    if preload < 0:
        raise ParameterError("Preload must be non-negative")
    if not (tau_w > 0 and tau_o > 0):
        raise ParameterError("Time constants must be positive")

    rating = scaled_rating(settings)
    w = memory_weight(time_to_trip, tau_w, tau_o)

    # (I_i²·w − Î²) / (w − 1), written with both terms positive
    numerator = rating * rating - preload * preload * w
    denominator = 1.0 - w
    if numerator <= 0 or denominator <= 0:
        raise AlreadyTrippingError(
            f"Preload {preload:.3f} A already exceeds the thermal boundary of "
            f"{rating:.3f} A within {time_to_trip:.1f} min"
        )
    if preload == rating:
        return rating
    return math.sqrt(numerator / denominator)


def min_scale_factor(preload: float, rated_phase_current: float, time_to_trip: float,
                     tau_w: float, tau_o: float) -> float:
    """Scale factor below which `trip_current` has no real solution for this preload."""
    w = memory_weight(time_to_trip, tau_w, tau_o)
    return preload * math.sqrt(w) / rated_phase_current
