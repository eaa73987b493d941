"""Small-area conversion between WGS-84 lat/lon and a local east-north-up frame.

Equirectangular projection on a sphere of radius 6378137 m, anchored at a
reference point.  Good to millimetres over an intersection, and valid within
one degree of the anchor.  Headings and bearings use the compass convention
(0 = north, 90 = east) throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6378137.0
VALIDITY_DEG = 1.0

_M_PER_DEG = math.pi / 180.0 * EARTH_RADIUS_M


class GeoError(ValueError):
    pass


class OutOfValidity(GeoError):
    pass


class DegenerateSegment(GeoError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float
    elev_m: float = 0.0

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat_deg <= 90.0 or not -180.0 <= self.lon_deg <= 180.0:
            raise GeoError(f"({self.lat_deg}, {self.lon_deg}) is not a valid lat/lon")


@dataclass(frozen=True)
class LocalPoint:
    east_m: float
    north_m: float
    up_m: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.east_m, self.north_m, self.up_m)):
            raise GeoError(f"non-finite local point {self}")


def _wrap_lon(delta: float) -> float:
    return (delta + 180.0) % 360.0 - 180.0


def to_local(ref: GeoPoint, p: GeoPoint) -> LocalPoint:
    dlat = p.lat_deg - ref.lat_deg
    dlon = _wrap_lon(p.lon_deg - ref.lon_deg)
    if abs(dlat) >= VALIDITY_DEG or abs(dlon) >= VALIDITY_DEG:
        raise OutOfValidity(f"{p} is more than {VALIDITY_DEG} deg from {ref}")
    return LocalPoint(
        east_m=dlon * _M_PER_DEG * math.cos(math.radians(ref.lat_deg)),
        north_m=dlat * _M_PER_DEG,
        up_m=p.elev_m - ref.elev_m,
    )


def from_local(ref: GeoPoint, lp: LocalPoint) -> GeoPoint:
    lat = ref.lat_deg + lp.north_m / _M_PER_DEG
    lon = ref.lon_deg + lp.east_m / (_M_PER_DEG * math.cos(math.radians(ref.lat_deg)))
    return GeoPoint(lat, _wrap_lon(lon) if not -180.0 <= lon <= 180.0 else lon, ref.elev_m + lp.up_m)


def bearing_deg(start: LocalPoint, end: LocalPoint) -> float:
    """Compass bearing from ``start`` to ``end`` in [0, 360)."""
    de = end.east_m - start.east_m
    dn = end.north_m - start.north_m
    if de == 0.0 and dn == 0.0:
        raise DegenerateSegment("coincident points have no bearing")
    b = math.degrees(math.atan2(de, dn)) % 360.0
    return 0.0 if b == 360.0 else b


def horizontal_distance(a: LocalPoint, b: LocalPoint) -> float:
    return math.hypot(b.east_m - a.east_m, b.north_m - a.north_m)


def angle_diff(a: float, b: float) -> float:
    """Smallest absolute difference between two compass angles, in [0, 180]."""
    d = abs(a - b) % 360.0
    return 360.0 - d if d > 180.0 else d


def rotate(lp: LocalPoint, degrees: float) -> LocalPoint:
    """Rotate clockwise (compass sense) about the origin."""
    th = math.radians(degrees)
    c, s = math.cos(th), math.sin(th)
    return LocalPoint(
        east_m=lp.east_m * c + lp.north_m * s,
        north_m=-lp.east_m * s + lp.north_m * c,
        up_m=lp.up_m,
    )
