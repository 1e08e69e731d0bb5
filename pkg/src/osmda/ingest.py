"""OSM object acquisition: extract files, spatial index, remote fetch.

Supported extract formats: standard OSM XML (node/way/relation) and a
JSON-lines dump with one object per line:

    {"id": 1, "tags": {...}, "geometry": {"type": ..., "coordinates": ...}}
"""

from __future__ import annotations

import json
import logging
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import requests

from .geo import BBox, Geometry, InvalidGeometryError

log = logging.getLogger(__name__)

DEFAULT_LEAF_SIZE = 16


class RemoteError(RuntimeError):
    """Remote endpoint failed after all retries."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


@dataclass
class OsmObject:
    osm_id: int
    tags: dict[str, str]
    geometry: Geometry
    object_class: str | None = None
    label: str | None = None

    def to_json(self) -> dict:
        d = {
            "id": self.osm_id,
            "tags": self.tags,
            "geometry": {
                "type": self.geometry.kind,
                "coordinates": [list(c) for c in self.geometry.coords],
            },
        }
        if self.object_class is not None:
            d["object_class"] = self.object_class
        if self.label is not None:
            d["label"] = self.label
        return d

    @classmethod
    def from_json(cls, d: dict) -> "OsmObject":
        g = d["geometry"]
        coords = g["coordinates"]
        if g["type"] == "point" and coords and not isinstance(coords[0], (list, tuple)):
            coords = [coords]
        return cls(
            osm_id=int(d["id"]),
            tags=dict(d["tags"]),
            geometry=Geometry(g["type"], tuple(tuple(c) for c in coords)),
            object_class=d.get("object_class"),
            label=d.get("label"),
        )


@dataclass
class ExtractLoad:
    objects: list[OsmObject]
    skipped: int = 0
    warnings: list[str] = field(default_factory=list)


def _way_geometry(node_ids, node_coords):
    coords = tuple(node_coords[n] for n in node_ids)
    if len(coords) >= 4 and coords[0] == coords[-1]:
        return Geometry("polygon", coords)
    if len(coords) >= 2:
        return Geometry("linestring", coords)
    raise InvalidGeometryError("way with <2 resolvable nodes")


def _parse_xml(path) -> ExtractLoad:
    tree = ET.parse(path)
    root = tree.getroot()
    node_coords: dict[int, tuple[float, float]] = {}
    way_nodes: dict[int, list[int]] = {}
    tagged: list[tuple[str, int, dict, ET.Element]] = []

    for el in root:
        if el.tag == "node":
            nid = int(el.attrib["id"])
            node_coords[nid] = (float(el.attrib["lon"]), float(el.attrib["lat"]))
        elif el.tag == "way":
            way_nodes[int(el.attrib["id"])] = [
                int(nd.attrib["ref"]) for nd in el.findall("nd")
            ]
        tags = {t.attrib["k"]: t.attrib["v"] for t in el.findall("tag")}
        if tags and el.tag in ("node", "way", "relation"):
            tagged.append((el.tag, int(el.attrib["id"]), tags, el))

    objects, skipped = [], 0
    for kind, eid, tags, el in tagged:
        try:
            if kind == "node":
                geom = Geometry("point", (node_coords[eid],))
            elif kind == "way":
                if any(n not in node_coords for n in way_nodes[eid]):
                    raise InvalidGeometryError("unresolvable node ref")
                geom = _way_geometry(way_nodes[eid], node_coords)
            else:
                geom = _relation_geometry(el, way_nodes, node_coords)
            objects.append(OsmObject(eid, tags, geom))
        except (KeyError, InvalidGeometryError):
            skipped += 1
    return ExtractLoad(objects, skipped)


def _relation_geometry(el, way_nodes, node_coords):
    """Single-outer-ring multipolygons only; anything else is skipped."""
    outers = [
        int(m.attrib["ref"])
        for m in el.findall("member")
        if m.attrib.get("type") == "way" and m.attrib.get("role") == "outer"
    ]
    if len(outers) != 1 or outers[0] not in way_nodes:
        raise InvalidGeometryError("unsupported relation")
    nids = way_nodes[outers[0]]
    if any(n not in node_coords for n in nids):
        raise InvalidGeometryError("unresolvable member nodes")
    coords = [node_coords[n] for n in nids]
    if coords and coords[0] != coords[-1]:
        coords.append(coords[0])
    return Geometry("polygon", tuple(coords))


def _parse_jsonl(path) -> ExtractLoad:
    objects, skipped = [], 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                if not d.get("tags"):
                    skipped += 1
                    continue
                objects.append(OsmObject.from_json(d))
            except (ValueError, KeyError, TypeError, InvalidGeometryError):
                skipped += 1
    return ExtractLoad(objects, skipped)


def parse_jsonl_objects(text: str) -> ExtractLoad:
    """Parse the JSON-lines dump format from an in-memory string."""
    objects, skipped = [], 0
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            d = json.loads(line)
            if not d.get("tags"):
                skipped += 1
                continue
            objects.append(OsmObject.from_json(d))
        except (ValueError, KeyError, TypeError, InvalidGeometryError):
            skipped += 1
    return ExtractLoad(objects, skipped)


def load_extract(path) -> ExtractLoad:
    """Load an OSM XML or JSONL extract.

    Every well-formed element with at least one tag and a resolvable
    geometry becomes an OsmObject; malformed elements are counted and
    skipped. An empty result is a warning, not an error.
    """
    with open(path, encoding="utf-8") as f:
        head = f.read(256).lstrip()
    if head.startswith("<"):
        result = _parse_xml(path)
    else:
        result = _parse_jsonl(path)
    if not result.objects:
        result.warnings.append("empty-extract")
        log.warning("extract %s yielded zero objects", path)
    return result


class SpatialIndex:
    """Static packed R-tree (STR bulk load) over object geometry bboxes."""

    def __init__(self, objects: list[OsmObject], leaf_size: int = DEFAULT_LEAF_SIZE):
        self._objects = list(objects)
        self._boxes = [o.geometry.bbox() for o in self._objects]
        self._root = self._build(list(range(len(self._objects))), leaf_size)

    def _build(self, idxs, leaf_size):
        if len(idxs) <= leaf_size:
            return ("leaf", idxs, self._union(idxs))
        import math as _m

        nleaves = _m.ceil(len(idxs) / leaf_size)
        nslices = _m.ceil(_m.sqrt(nleaves))
        per_slice = _m.ceil(len(idxs) / nslices)
        by_x = sorted(idxs, key=lambda i: self._boxes[i].min_lon + self._boxes[i].max_lon)
        children = []
        for s in range(0, len(by_x), per_slice):
            sl = sorted(
                by_x[s : s + per_slice],
                key=lambda i: self._boxes[i].min_lat + self._boxes[i].max_lat,
            )
            for t in range(0, len(sl), leaf_size):
                leaf = sl[t : t + leaf_size]
                children.append(("leaf", leaf, self._union(leaf)))
        return ("node", children, self._union(idxs))

    def _union(self, idxs):
        if not idxs:
            return None
        boxes = [self._boxes[i] for i in idxs]
        return BBox(
            min(b.min_lon for b in boxes),
            min(b.min_lat for b in boxes),
            max(b.max_lon for b in boxes),
            max(b.max_lat for b in boxes),
        )

    def query(self, footprint: BBox) -> list[OsmObject]:
        """Objects whose geometry bbox intersects the footprint, id-sorted."""
        hits: list[int] = []
        stack = [self._root]
        while stack:
            kind, payload, mbr = stack.pop()
            if mbr is None or not mbr.intersects(footprint):
                continue
            if kind == "leaf":
                hits.extend(
                    i for i in payload if self._boxes[i].intersects(footprint)
                )
            else:
                stack.extend(payload)
        return sorted((self._objects[i] for i in hits), key=lambda o: o.osm_id)


def query_objects(index: SpatialIndex, footprint: BBox) -> list[OsmObject]:
    return index.query(footprint)


def fetch_remote(
    endpoint_url: str,
    footprint: BBox,
    session: requests.Session | None = None,
    max_attempts: int = 3,
    backoff_s: float = 0.5,
    timeout_s: float = 60.0,
) -> list[OsmObject]:
    """POST a bbox query to an Overpass-style endpoint.

    The response body must be the JSON-lines dump format. Retries with
    exponential backoff on 5xx, 429, and transport errors.
    """
    sess = session or requests.Session()
    last_status = None
    for attempt in range(max_attempts):
        try:
            resp = sess.post(
                endpoint_url, json={"bbox": footprint.as_list()}, timeout=timeout_s
            )
            last_status = resp.status_code
            if resp.status_code == 200:
                return parse_jsonl_objects(resp.text).objects
            if resp.status_code not in (429,) and resp.status_code < 500:
                raise RemoteError(
                    f"endpoint returned {resp.status_code}", status=resp.status_code
                )
        except requests.RequestException:
            last_status = None
        if attempt < max_attempts - 1:
            time.sleep(backoff_s * (2**attempt))
    raise RemoteError(
        f"exhausted {max_attempts} attempts (last status {last_status})",
        status=last_status,
    )
