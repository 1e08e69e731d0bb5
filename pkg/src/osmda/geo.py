"""Geometry primitives, planar measures, and footprint<->pixel transforms.

All measures use a local equirectangular projection per feature, which is
adequate at tile scale (a few km at most). Lengths are great-circle sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

EARTH_RADIUS_M = 6371008.8


class InvalidGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class BBox:
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self):
        if not (self.min_lon < self.max_lon and self.min_lat < self.max_lat):
            raise ValueError(f"degenerate bbox {self}")
        if not (-90.0 <= self.min_lat and self.max_lat <= 90.0):
            raise ValueError(f"latitude out of range in {self}")
        if not (-180.0 <= self.min_lon and self.max_lon <= 180.0):
            raise ValueError(f"longitude out of range in {self}")

    def intersects(self, other: "BBox") -> bool:
        return (
            self.min_lon <= other.max_lon
            and other.min_lon <= self.max_lon
            and self.min_lat <= other.max_lat
            and other.min_lat <= self.max_lat
        )

    def as_list(self) -> list[float]:
        return [self.min_lon, self.min_lat, self.max_lon, self.max_lat]


@dataclass(frozen=True)
class Geometry:
    """A point, linestring, or polygon in lon/lat degrees.

    Polygons are a single closed outer ring (first vertex == last).
    """

    kind: str
    coords: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.kind not in ("point", "linestring", "polygon"):
            raise InvalidGeometryError(f"unknown geometry kind {self.kind!r}")
        coords = tuple((float(x), float(y)) for x, y in self.coords)
        object.__setattr__(self, "coords", coords)
        for lon, lat in coords:
            if math.isnan(lon) or math.isnan(lat):
                raise InvalidGeometryError("NaN coordinate")
        if self.kind == "point" and len(coords) != 1:
            raise InvalidGeometryError("point needs exactly one vertex")
        if self.kind == "linestring" and len(coords) < 2:
            raise InvalidGeometryError("linestring needs >=2 vertices")
        if self.kind == "polygon":
            if len(coords) < 4:
                raise InvalidGeometryError("polygon needs >=4 vertices")
            if coords[0] != coords[-1]:
                raise InvalidGeometryError("polygon ring not closed")

    def bbox(self) -> BBox:
        lons = [c[0] for c in self.coords]
        lats = [c[1] for c in self.coords]
        if len(self.coords) == 1:
            # degenerate box around a point; BBox requires strict ordering
            eps = 1e-9
            lon, lat = self.coords[0]
            return BBox(lon - eps, lat - eps, lon + eps, lat + eps)
        mnx, mxx = min(lons), max(lons)
        mny, mxy = min(lats), max(lats)
        eps = 1e-9
        if mnx == mxx:
            mnx, mxx = mnx - eps, mxx + eps
        if mny == mxy:
            mny, mxy = mny - eps, mxy + eps
        return BBox(mnx, mny, mxx, mxy)


@dataclass(frozen=True)
class ImageRecord:
    """A georeferenced satellite image with its footprint bounding box."""

    id: str
    footprint: BBox
    width_px: int
    height_px: int
    resolution_m: float
    image_path: str = ""

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("image dims must be positive")
        if self.resolution_m <= 0:
            raise ValueError("resolution_m must be positive")
        gw, gh = footprint_extent_m(self.footprint)
        for ground, pixels in ((gw, self.width_px), (gh, self.height_px)):
            expected = pixels * self.resolution_m
            if abs(ground - expected) > 0.05 * expected:
                raise ValueError(
                    f"footprint extent {ground:.1f} m inconsistent with "
                    f"{pixels} px at {self.resolution_m} m/px"
                )


def footprint_extent_m(b: BBox) -> tuple[float, float]:
    """Ground (width, height) of a bbox in meters, equirectangular."""
    lat0 = math.radians((b.min_lat + b.max_lat) / 2.0)
    w = EARTH_RADIUS_M * math.cos(lat0) * math.radians(b.max_lon - b.min_lon)
    h = EARTH_RADIUS_M * math.radians(b.max_lat - b.min_lat)
    return w, h


def pixel_ground_area(resolution_m: float) -> float:
    """Ground area covered by one pixel, in square meters."""
    if resolution_m <= 0:
        raise ValueError("resolution_m must be positive")
    return resolution_m * resolution_m


def _project_local(coords, lon0: float, lat0: float):
    """Equirectangular projection about (lon0, lat0) to meters."""
    clat = math.cos(math.radians(lat0))
    return [
        (
            EARTH_RADIUS_M * clat * math.radians(lon - lon0),
            EARTH_RADIUS_M * math.radians(lat - lat0),
        )
        for lon, lat in coords
    ]


def polygon_area(g: Geometry) -> float:
    """Planar area of a closed polygon in square meters (shoelace)."""
    if g.kind != "polygon":
        raise InvalidGeometryError("polygon_area needs a polygon")
    ring = g.coords[:-1]
    lon0 = sum(c[0] for c in ring) / len(ring)
    lat0 = sum(c[1] for c in ring) / len(ring)
    pts = _project_local(ring, lon0, lat0)
    acc = 0.0
    n = len(pts)
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def haversine_m(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    """Great-circle distance between two lon/lat points, meters."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def linestring_length(g: Geometry) -> float:
    """Sum of great-circle segment lengths in meters."""
    if g.kind != "linestring":
        raise InvalidGeometryError("linestring_length needs a linestring")
    total = 0.0
    for (lon1, lat1), (lon2, lat2) in zip(g.coords, g.coords[1:]):
        total += haversine_m(lon1, lat1, lon2, lat2)
    return total


@dataclass(frozen=True)
class FootprintTransform:
    """Affine map from (lon, lat) to pixel coordinates of an image.

    North is row 0 (y axis inverted). The footprint NW corner maps to
    (0, 0) and the SE corner to (width_px, height_px).
    """

    footprint: BBox
    width_px: int
    height_px: int
    _sx: float = field(init=False)
    _sy: float = field(init=False)

    def __post_init__(self):
        b = self.footprint
        object.__setattr__(self, "_sx", self.width_px / (b.max_lon - b.min_lon))
        object.__setattr__(self, "_sy", self.height_px / (b.max_lat - b.min_lat))

    def forward(self, lon: float, lat: float) -> tuple[float, float]:
        b = self.footprint
        return (lon - b.min_lon) * self._sx, (b.max_lat - lat) * self._sy

    def inverse(self, px: float, py: float) -> tuple[float, float]:
        b = self.footprint
        return b.min_lon + px / self._sx, b.max_lat - py / self._sy


def footprint_transform(rec: ImageRecord) -> FootprintTransform:
    return FootprintTransform(rec.footprint, rec.width_px, rec.height_px)
