"""Great-circle geometry on a spherical Earth.

All lengths are meters, all times seconds, all angles radians unless a
name says otherwise (``*_deg``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6378137.0
MAX_DISTANCE_M = math.pi * EARTH_RADIUS_M


def _normalize_lon(lon: float) -> float:
    lon = math.fmod(lon + math.pi, 2.0 * math.pi)
    if lon < 0.0:
        lon += 2.0 * math.pi
    lon -= math.pi
    # fmod can land exactly on +pi after the shift for inputs like -pi - tiny
    if lon >= math.pi:
        lon -= 2.0 * math.pi
    return lon


@dataclass(frozen=True)
class GeoPoint:
    """A WGS-84 position stored in radians.

    Longitude is normalized into [-pi, pi); latitude outside
    [-pi/2, pi/2] raises ``ValueError``.
    """

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -math.pi / 2 <= self.lat <= math.pi / 2:
            raise ValueError(f"latitude {self.lat} rad outside [-pi/2, pi/2]")
        if not -math.pi <= self.lon < math.pi:
            object.__setattr__(self, "lon", _normalize_lon(self.lon))

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float) -> "GeoPoint":
        return cls(lat_deg * math.pi / 180.0, lon_deg * math.pi / 180.0)

    @property
    def lat_deg(self) -> float:
        return self.lat * 180.0 / math.pi

    @property
    def lon_deg(self) -> float:
        return self.lon * 180.0 / math.pi


@dataclass(frozen=True, order=True)
class Distance:
    meters: float

    def __post_init__(self):
        if not 0.0 <= self.meters <= MAX_DISTANCE_M * (1 + 1e-12):
            raise ValueError(f"distance {self.meters} m out of range")

    def __float__(self) -> float:
        return self.meters


@dataclass(frozen=True)
class Speed:
    meters_per_second: float

    def __post_init__(self):
        if not self.meters_per_second > 0.0 or not math.isfinite(self.meters_per_second):
            raise ValueError(f"speed must be positive, got {self.meters_per_second}")


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance in meters as a bare float (hot path)."""
    s_lat = math.sin((a.lat - b.lat) / 2.0)
    s_lon = math.sin((a.lon - b.lon) / 2.0)
    h = s_lat * s_lat + math.cos(a.lat) * math.cos(b.lat) * s_lon * s_lon
    h = min(max(h, 0.0), 1.0)
    return 2.0 * math.asin(math.sqrt(h)) * EARTH_RADIUS_M


def haversine_distance(a: GeoPoint, b: GeoPoint) -> Distance:
    return Distance(haversine_m(a, b))


def switch_time(d: Distance | float, v: Speed | float) -> float:
    """Seconds needed to cover ``d`` at constant speed ``v``."""
    meters = d.meters if isinstance(d, Distance) else float(d)
    mps = v.meters_per_second if isinstance(v, Speed) else float(v)
    if not mps > 0.0:
        raise ValueError(f"speed must be positive, got {mps}")
    if meters < 0.0:
        raise ValueError(f"distance must be non-negative, got {meters}")
    return meters / mps


def _to_vec(p: GeoPoint) -> tuple[float, float, float]:
    c = math.cos(p.lat)
    return (c * math.cos(p.lon), c * math.sin(p.lon), math.sin(p.lat))


def _from_vec(x: float, y: float, z: float) -> GeoPoint:
    lat = math.atan2(z, math.hypot(x, y))
    return GeoPoint(lat, math.atan2(y, x))


def step_towards(start: GeoPoint, target: GeoPoint, step_m: float) -> GeoPoint:
    """Move ``step_m`` meters from ``start`` along the great circle to ``target``.

    Returns ``target`` itself once the step covers the remaining distance.
    Antipodal pairs are resolved by routing over the north pole.
    """
    if step_m < 0.0:
        raise ValueError(f"step must be non-negative, got {step_m}")
    remaining = haversine_m(start, target)
    if step_m >= remaining:
        return target
    if step_m == 0.0:
        return start

    a = _to_vec(start)
    b = _to_vec(target)
    cos_omega = a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    # tangent direction at `a` pointing to `b`
    u = (b[0] - a[0] * cos_omega, b[1] - a[1] * cos_omega, b[2] - a[2] * cos_omega)
    norm = math.sqrt(u[0] ** 2 + u[1] ** 2 + u[2] ** 2)
    if norm < 1e-12:
        # antipodal: head for the north pole (or along lon=0 when starting there)
        pole = (0.0, 0.0, 1.0) if a[2] < 1.0 - 1e-12 else (1.0, 0.0, 0.0)
        dot = a[2] if pole[2] else a[0]
        u = (pole[0] - a[0] * dot, pole[1] - a[1] * dot, pole[2] - a[2] * dot)
        norm = math.sqrt(u[0] ** 2 + u[1] ** 2 + u[2] ** 2)
    u = (u[0] / norm, u[1] / norm, u[2] / norm)

    theta = step_m / EARTH_RADIUS_M
    c, s = math.cos(theta), math.sin(theta)
    return _from_vec(a[0] * c + u[0] * s, a[1] * c + u[1] * s, a[2] * c + u[2] * s)


def offset(p: GeoPoint, bearing: float, meters: float) -> GeoPoint:
    """Point reached from ``p`` after ``meters`` along initial ``bearing`` (rad, from north)."""
    if meters == 0.0:
        return p
    delta = meters / EARTH_RADIUS_M
    sin_lat = math.sin(p.lat) * math.cos(delta) + math.cos(p.lat) * math.sin(delta) * math.cos(bearing)
    lat = math.asin(min(1.0, max(-1.0, sin_lat)))
    lon = p.lon + math.atan2(
        math.sin(bearing) * math.sin(delta) * math.cos(p.lat),
        math.cos(delta) - math.sin(p.lat) * sin_lat,
    )
    return GeoPoint(lat, lon)


def degrees_exact(rad: float) -> float:
    """Degrees value that converts back to exactly ``rad`` when one exists nearby.

    Several neighbouring doubles can map to the same radian value; the one
    with the shortest decimal form wins, so 38.88 stays 38.88.
    """
    deg = rad * 180.0 / math.pi
    candidates = [deg]
    lo = hi = deg
    for _ in range(8):
        lo = math.nextafter(lo, -math.inf)
        hi = math.nextafter(hi, math.inf)
        candidates += [lo, hi]
    exact = [c for c in candidates if c * math.pi / 180.0 == rad]
    if not exact:
        return deg
    return min(exact, key=lambda c: (len(repr(c)), abs(c - deg)))


def kmh_to_mps(kmh: float) -> float:
    return kmh / 3.6
