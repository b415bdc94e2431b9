"""Power-trace statistics and great-circle distance."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EARTH_RADIUS_MILES = 3958.8


class UndefinedCoVError(ValueError):
    """Raised when a series has non-positive mean (all-zero or degenerate trace)."""


@dataclass(frozen=True)
class Location:
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")


def cov(series: Sequence[float]) -> float:
    """Coefficient of variation: population std divided by mean."""
    arr = np.asarray(series, dtype=float)
    if arr.size == 0:
        raise UndefinedCoVError("empty series")
    mean = arr.mean()
    if not mean > 0:
        raise UndefinedCoVError(f"mean is {mean!r}; CoV undefined")
    return float(arr.std() / mean)


def stable_power(series: Sequence[float], window_steps: int | None = None) -> float:
    """Minimum production over the trailing ``window_steps`` samples."""
    arr = np.asarray(series, dtype=float)
    if window_steps is None:
        window_steps = arr.size
    if window_steps < 1 or window_steps > arr.size:
        raise ValueError(f"window_steps={window_steps} outside [1, {arr.size}]")
    return float(arr[-window_steps:].min())


def distance_miles(a: Location, b: Location) -> float:
    """Haversine distance on a sphere of mean Earth radius."""
    if a == b:
        return 0.0
    lat1, lon1 = math.radians(a.latitude), math.radians(a.longitude)
    lat2, lon2 = math.radians(b.latitude), math.radians(b.longitude)
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    h = min(1.0, max(0.0, h))
    return 2 * EARTH_RADIUS_MILES * math.asin(math.sqrt(h))


def distance_matrix(locations: Sequence[Location]) -> np.ndarray:
    n = len(locations)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = distance_miles(locations[i], locations[j])
    return out


def geometric_center(locations: Sequence[Location]) -> Location:
    # coordinate-wise mean; adequate for continental-scale cost accounting
    if not locations:
        raise ValueError("no locations")
    lat = sum(loc.latitude for loc in locations) / len(locations)
    lon = sum(loc.longitude for loc in locations) / len(locations)
    return Location(lat, lon)
