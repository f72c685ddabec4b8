"""Great-circle distances on a spherical Earth."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

EARTH_RADIUS_KM = 6371.0
MAX_DISTANCE_KM = math.pi * EARTH_RADIUS_KM


class GeoDomainError(ValueError):
    """A coordinate is non-finite or outside its valid range."""

    def __init__(self, field: str, value: float):
        super().__init__(f"{field}={value!r} outside valid range")
        self.field = field
        self.value = value


def check_coordinates(lat: float, long: float) -> None:
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise GeoDomainError("lat", lat)
    if not (math.isfinite(long) and -180.0 <= long <= 180.0):
        raise GeoDomainError("long", long)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    long: float

    def __post_init__(self):
        object.__setattr__(self, "lat", float(self.lat))
        object.__setattr__(self, "long", float(self.long))
        check_coordinates(self.lat, self.long)


def _ordered(a: GeoPoint, b: GeoPoint) -> tuple[GeoPoint, GeoPoint]:
    # Fixed argument order keeps the result bitwise symmetric.
    if (a.lat, a.long) <= (b.lat, b.long):
        return a, b
    return b, a


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    check_coordinates(a.lat, a.long)
    check_coordinates(b.lat, b.long)
    p, q = _ordered(a, b)
    rad = math.pi / 180.0
    s1 = math.sin((q.lat - p.lat) * rad / 2.0)
    s2 = math.sin((q.long - p.long) * rad / 2.0)
    h = s1 * s1 + math.cos(p.lat * rad) * math.cos(q.lat * rad) * s2 * s2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(h, 1.0)))


def normalized_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance as a fraction of half the Earth's circumference, in [0, 1]."""
    return min(haversine_km(a, b) / MAX_DISTANCE_KM, 1.0)


def haversine_km_many(origin: GeoPoint, lats, longs) -> np.ndarray:
    """Distances from ``origin`` to each (lat, long) pair; vectorised through the kernel backend."""
    lats = np.ascontiguousarray(lats, dtype=np.float64)
    longs = np.ascontiguousarray(longs, dtype=np.float64)
    return kernels.haversine_many(origin.lat, origin.long, lats, longs, EARTH_RADIUS_KM)
