"""The local AP discovery log, indexed on a lat/lon grid.

Records are keyed by BSSID. Nearest and in-range queries walk the grid in
expanding square rings and stop once no unvisited cell can beat the best
candidate, so their answers equal an exhaustive scan.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator
from urllib.parse import quote, unquote

import numpy as np

from .geo import EARTH_RADIUS_M, GeoPoint, degrees_exact, haversine_m

BSSID_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")
DEFAULT_CELL_DEG = 0.01

# stop margin so a lower bound computed with different trig never prunes a tie
_BOUND_REL = 1e-9
_BOUND_ABS_M = 1e-6


class NoKnownAp(LookupError):
    """Raised when a nearest-AP match is requested from an empty log."""


class RegistryParseError(ValueError):
    def __init__(self, line: int, field: str, message: str):
        super().__init__(f"line {line}: field '{field}': {message}")
        self.line = line
        self.field = field


def canonical_bssid(raw: str) -> str:
    bssid = raw.strip().lower().replace("-", ":")
    if not BSSID_RE.match(bssid):
        raise ValueError(f"malformed bssid {raw!r}")
    return bssid


@dataclass(frozen=True)
class ApRecord:
    timestamp: int
    ssid: str
    bssid: str
    location: GeoPoint
    range_m: float
    auth: str | None = None

    def __post_init__(self):
        if not BSSID_RE.match(self.bssid):
            raise ValueError(f"malformed bssid {self.bssid!r}")
        if not self.ssid:
            raise ValueError("ssid must be non-empty")
        if not (self.range_m > 0 and math.isfinite(self.range_m)):
            raise ValueError(f"range_m must be positive, got {self.range_m}")
        if isinstance(self.timestamp, bool) or int(self.timestamp) != self.timestamp:
            raise ValueError(f"timestamp must be an integer, got {self.timestamp!r}")


def _ring_cells(ci: int, cj: int, k: int, n_lat: int, n_lon: int) -> Iterator[tuple[int, int]]:
    if k == 0:
        if 0 <= ci < n_lat:
            yield ci, cj % n_lon
        return
    for i in range(ci - k, ci + k + 1):
        if not 0 <= i < n_lat:
            continue
        if i in (ci - k, ci + k):
            for j in range(cj - k, cj + k + 1):
                yield i, j % n_lon
        else:
            yield i, (cj - k) % n_lon
            yield i, (cj + k) % n_lon


class Registry:
    """Mutable AP log with a grid index.

    Single writer, many readers: callers that share an instance across
    threads must serialize mutations themselves.
    """

    def __init__(self, records: Iterable[ApRecord] = (), cell_deg: float = DEFAULT_CELL_DEG):
        if not 0 < cell_deg <= 180:
            raise ValueError(f"cell_deg must be in (0, 180], got {cell_deg}")
        n_lat = round(180.0 / cell_deg)
        # wrapped longitude cells must tile the circle exactly for the ring bound
        if abs(n_lat * cell_deg - 180.0) > 1e-9:
            raise ValueError(f"cell_deg must divide 180 evenly, got {cell_deg}")
        self.cell_deg = cell_deg
        self._n_lat = n_lat
        self._n_lon = 2 * n_lat
        self._records: dict[str, ApRecord] = {}
        self._cells: dict[tuple[int, int], dict[str, ApRecord]] = {}
        self._max_range_m = 0.0
        for rec in records:
            self.insert(rec)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[ApRecord]:
        return iter(sorted(self._records.values(), key=lambda r: r.bssid))

    def __contains__(self, bssid: str) -> bool:
        return bssid in self._records

    def get(self, bssid: str) -> ApRecord | None:
        return self._records.get(bssid)

    @property
    def records(self) -> dict[str, ApRecord]:
        return dict(self._records)

    def cell_of(self, p: GeoPoint) -> tuple[int, int]:
        i = int(math.floor((p.lat_deg + 90.0) / self.cell_deg))
        j = int(math.floor((p.lon_deg + 180.0) / self.cell_deg))
        return min(max(i, 0), self._n_lat - 1), j % self._n_lon

    def insert(self, rec: ApRecord) -> bool:
        """Add ``rec``; returns False when an equal-or-newer record is kept."""
        old = self._records.get(rec.bssid)
        if old is not None:
            if rec.timestamp <= old.timestamp:
                return False
            self._cells[self.cell_of(old.location)].pop(rec.bssid)
        self._records[rec.bssid] = rec
        self._cells.setdefault(self.cell_of(rec.location), {})[rec.bssid] = rec
        self._max_range_m = max(self._max_range_m, rec.range_m)
        return True

    def _unvisited_bound(self, p: GeoPoint, ci: int, cj: int, k: int) -> float:
        """Lower bound on the distance from ``p`` to any cell outside ring ``k``."""
        cell = self.cell_deg
        bounds = []
        lat_hi = -90.0 + (ci + k + 1) * cell
        lat_lo = -90.0 + (ci - k) * cell
        if lat_hi < 90.0:
            bounds.append(math.radians(lat_hi) - p.lat)
        if lat_lo > -90.0:
            bounds.append(p.lat - math.radians(lat_lo))
        if (2 * k + 1) < self._n_lon:
            east = -180.0 + (cj + k + 1) * cell
            west = -180.0 + (cj - k) * cell
            for w_deg in (east - p.lon_deg, p.lon_deg - west):
                w = math.radians(w_deg)
                if w >= math.pi / 2:
                    # past the quarter turn the meridian bound stops being monotone
                    bounds.append(math.pi / 2 - abs(p.lat))
                else:
                    bounds.append(math.asin(min(1.0, math.sin(w) * math.cos(p.lat))))
        if not bounds:
            return math.inf
        return max(0.0, min(bounds)) * EARTH_RADIUS_M

    def _walk(self, p: GeoPoint) -> Iterator[tuple[list[ApRecord], float]]:
        """Yield (records in next ring, bound on everything not yet yielded)."""
        ci, cj = self.cell_of(p)
        seen: set[tuple[int, int]] = set()
        k = 0
        while True:
            # once the square outgrows the record count, a flat scan is cheaper
            if (2 * k + 1) ** 2 > max(len(self._records), 9) or 2 * k + 1 >= self._n_lon:
                rest = [r for key, bucket in self._cells.items() if key not in seen for r in bucket.values()]
                yield rest, math.inf
                return
            found: list[ApRecord] = []
            for key in _ring_cells(ci, cj, k, self._n_lat, self._n_lon):
                if key in seen:
                    continue
                seen.add(key)
                bucket = self._cells.get(key)
                if bucket:
                    found.extend(bucket.values())
            bound = self._unvisited_bound(p, ci, cj, k)
            yield found, bound
            if bound == math.inf:
                return
            k += 1

    def nearest(self, p: GeoPoint) -> tuple[ApRecord, float]:
        """Closest record and its distance in meters; ties go to the smaller BSSID."""
        if not self._records:
            raise NoKnownAp("registry is empty")
        best: tuple[float, str] | None = None
        best_rec = None
        for found, bound in self._walk(p):
            for rec in found:
                key = (haversine_m(p, rec.location), rec.bssid)
                if best is None or key < best:
                    best, best_rec = key, rec
            if best is not None and bound > best[0] * (1 + _BOUND_REL) + _BOUND_ABS_M:
                break
        assert best_rec is not None and best is not None
        return best_rec, best[0]

    def nearest_k(self, p: GeoPoint, k: int) -> list[tuple[ApRecord, float]]:
        """Up to ``k`` closest records sorted by (distance, bssid)."""
        if k <= 0:
            raise ValueError("k must be positive")
        hits: list[tuple[float, str, ApRecord]] = []
        for found, bound in self._walk(p):
            for rec in found:
                hits.append((haversine_m(p, rec.location), rec.bssid, rec))
            hits.sort(key=lambda h: (h[0], h[1]))
            del hits[k:]
            if len(hits) == k and bound > hits[-1][0] * (1 + _BOUND_REL) + _BOUND_ABS_M:
                break
        return [(rec, d) for d, _, rec in hits]

    def in_range(self, p: GeoPoint) -> ApRecord | None:
        """Nearest record whose coverage radius contains ``p``, if any."""
        best: tuple[float, str] | None = None
        best_rec = None
        limit = self._max_range_m * (1 + _BOUND_REL) + _BOUND_ABS_M
        for found, bound in self._walk(p):
            for rec in found:
                d = haversine_m(p, rec.location)
                if d <= rec.range_m and (best is None or (d, rec.bssid) < best):
                    best, best_rec = (d, rec.bssid), rec
            if bound > limit:
                break
        return best_rec


def nearest_ap(reg: Registry, p: GeoPoint) -> tuple[ApRecord, float]:
    return reg.nearest(p)


def in_range(reg: Registry, p: GeoPoint) -> ApRecord | None:
    return reg.in_range(p)


# -- .aplog persistence -------------------------------------------------------

def _fmt_deg(rad: float) -> str:
    """Fixed-point degrees (at least 7 decimals) that parse back to exactly ``rad``."""
    text = np.format_float_positional(degrees_exact(rad), unique=True, trim="-")
    whole, _, frac = text.partition(".")
    return f"{whole}.{frac.ljust(7, '0')}"


def format_record(rec: ApRecord) -> str:
    fields = [
        str(rec.timestamp),
        rec.bssid,
        quote(rec.ssid, safe=""),
        _fmt_deg(rec.location.lat),
        _fmt_deg(rec.location.lon),
        repr(float(rec.range_m)),
    ]
    if rec.auth is not None:
        fields.append(quote(rec.auth, safe=""))
    return " ".join(fields)


def parse_line(line: str, lineno: int) -> ApRecord | None:
    text = line.strip()
    if not text or text.startswith("#"):
        return None
    parts = text.split()
    names = ["timestamp", "bssid", "ssid", "lat_deg", "lon_deg", "range_m"]
    if len(parts) < 6:
        raise RegistryParseError(lineno, names[len(parts)], "missing field")
    if len(parts) > 7:
        raise RegistryParseError(lineno, "auth", "unexpected trailing fields")

    def num(idx: int, cast=float):
        try:
            value = cast(parts[idx])
        except ValueError:
            raise RegistryParseError(lineno, names[idx], f"not a number: {parts[idx]!r}") from None
        if isinstance(value, float) and not math.isfinite(value):
            raise RegistryParseError(lineno, names[idx], f"not finite: {parts[idx]!r}")
        return value

    timestamp = num(0, int)
    try:
        bssid = canonical_bssid(parts[1])
    except ValueError as exc:
        raise RegistryParseError(lineno, "bssid", str(exc)) from None
    ssid = unquote(parts[2])
    if not ssid:
        raise RegistryParseError(lineno, "ssid", "empty")
    lat_deg, lon_deg, range_m = num(3), num(4), num(5)
    if not -90.0 <= lat_deg <= 90.0:
        raise RegistryParseError(lineno, "lat_deg", f"{lat_deg} outside [-90, 90]")
    if not range_m > 0:
        raise RegistryParseError(lineno, "range_m", f"must be positive, got {range_m}")
    auth = unquote(parts[6]) if len(parts) == 7 else None
    return ApRecord(timestamp, ssid, bssid, GeoPoint.from_degrees(lat_deg, lon_deg), range_m, auth)


def load(path: str | Path, cell_deg: float = DEFAULT_CELL_DEG) -> Registry:
    reg = Registry(cell_deg=cell_deg)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            rec = parse_line(line, lineno)
            if rec is not None:
                reg.insert(rec)
    return reg


def save(reg: Registry, path: str | Path) -> None:
    lines = ["# timestamp_s bssid ssid lat_deg lon_deg range_m [auth]"]
    lines.extend(format_record(rec) for rec in reg)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
