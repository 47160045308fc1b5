import math

import numpy as np
import pytest

from handoff_sim.config import default_scenario
from handoff_sim.geo import EARTH_RADIUS_M, GeoPoint
from handoff_sim.registry import ApRecord


def law_of_cosines_m(a: GeoPoint, b: GeoPoint) -> float:
    """Independent distance oracle (spherical law of cosines)."""
    c = (math.sin(a.lat) * math.sin(b.lat)
         + math.cos(a.lat) * math.cos(b.lat) * math.cos(a.lon - b.lon))
    return EARTH_RADIUS_M * math.acos(min(1.0, max(-1.0, c)))


def random_point(rng: np.random.Generator, lat_deg=(-80.0, 80.0), lon_deg=(-180.0, 180.0)) -> GeoPoint:
    lat = rng.uniform(*lat_deg)
    lon = rng.uniform(*lon_deg)
    return GeoPoint.from_degrees(float(lat), float(lon))


def random_records(rng: np.random.Generator, n: int, lat_deg=(-80.0, 80.0), lon_deg=(-180.0, 180.0),
                   range_m=(20.0, 500.0), first_id: int = 0) -> list[ApRecord]:
    out = []
    for i in range(first_id, first_id + n):
        out.append(ApRecord(
            timestamp=int(rng.integers(0, 10**9)),
            ssid=f"net{i}",
            bssid=":".join(f"{b:02x}" for b in (i >> 40 & 255, i >> 32 & 255, i >> 24 & 255,
                                                  i >> 16 & 255, i >> 8 & 255, i & 255)),
            location=random_point(rng, lat_deg, lon_deg),
            range_m=float(rng.uniform(*range_m)),
        ))
    return out


@pytest.fixture
def campus():
    return default_scenario()
