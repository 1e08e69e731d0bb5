"""Visibility heuristics, tag anonymization, and key-based object typing."""

from __future__ import annotations

from dataclasses import dataclass, field

from .geo import ImageRecord, linestring_length, pixel_ground_area, polygon_area
from .ingest import OsmObject

# Ordered typing keys; first match wins, no match -> "other".
TYPING_KEYS = (
    "amenity",
    "highway",
    "barrier",
    "waterway",
    "traffic_calming",
    "building",
    "man_made",
    "natural",
    "emergency",
    "leisure",
    "landuse",
    "surface",
    "route",
)

# Values that mark non-visible infrastructure, matched case-insensitively
# against the typing keys plus "type".
TYPE_VALUE_BLACKLIST = frozenset(
    {"subway", "pipeline", "cable", "power cable", "sewer", "culvert", "manhole"}
)

TAG_PAIR_BLACKLIST = frozenset(
    {
        ("location", "underground"),
        ("tunnel", "yes"),
        ("tunnel", "culvert"),
        ("covered", "yes"),
        ("indoor", "yes"),
        ("parking", "underground"),
    }
)

# Keys (or key prefixes) carrying identifying or commercially sensitive
# information. "ref", "website", and "email" go beyond obvious PII since
# they still identify specific entities.
ANON_EXACT_KEYS = frozenset(
    {"name", "phone", "brand", "operator", "opening_hours", "owner", "website",
     "email", "ref"}
)
ANON_PREFIXES = ("name:", "addr:", "contact:")

RULE_POLYGON_SUBPIXEL = "polygon-subpixel"
RULE_LINESTRING_SUBPIXEL = "linestring-subpixel"
RULE_TAG_BLACKLIST = "tag-blacklist"
RULE_TYPE_BLACKLIST = "type-blacklist"
RULE_EMPTY_AFTER_ANONYMIZE = "empty-after-anonymize"


@dataclass
class FilterReport:
    kept: int = 0
    dropped_by_rule: dict[str, int] = field(default_factory=dict)
    anonymized_keys_removed: int = 0

    def drop(self, rule: str):
        self.dropped_by_rule[rule] = self.dropped_by_rule.get(rule, 0) + 1

    @property
    def total(self) -> int:
        return self.kept + sum(self.dropped_by_rule.values())

    def merge(self, other: "FilterReport") -> "FilterReport":
        out = FilterReport(
            kept=self.kept + other.kept,
            dropped_by_rule=dict(self.dropped_by_rule),
            anonymized_keys_removed=self.anonymized_keys_removed
            + other.anonymized_keys_removed,
        )
        for rule, n in other.dropped_by_rule.items():
            out.dropped_by_rule[rule] = out.dropped_by_rule.get(rule, 0) + n
        return out

    def to_json(self) -> dict:
        return {
            "kept": self.kept,
            "dropped_by_rule": self.dropped_by_rule,
            "anonymized_keys_removed": self.anonymized_keys_removed,
        }


def classify_object(tags: dict[str, str]) -> str:
    """First typing key present in the printed order wins; none -> other."""
    for key in TYPING_KEYS:
        if key in tags:
            return key
    return "other"


def is_visible(obj: OsmObject, resolution_m: float) -> tuple[bool, str | None]:
    """Visibility heuristic. Returns (visible, failed-rule-name)."""
    g = obj.geometry
    if g.kind == "polygon" and polygon_area(g) < pixel_ground_area(resolution_m):
        return False, RULE_POLYGON_SUBPIXEL
    if g.kind == "linestring" and linestring_length(g) < resolution_m:
        return False, RULE_LINESTRING_SUBPIXEL
    for key in (*TYPING_KEYS, "type"):
        if tags_value(obj.tags, key) in TYPE_VALUE_BLACKLIST:
            return False, RULE_TYPE_BLACKLIST
    for k, v in obj.tags.items():
        if (k, v) in TAG_PAIR_BLACKLIST:
            return False, RULE_TAG_BLACKLIST
    # administrative and legal boundaries are never visible from above
    if "boundary" in obj.tags:
        return False, RULE_TAG_BLACKLIST
    return True, None


def tags_value(tags: dict[str, str], key: str) -> str | None:
    v = tags.get(key)
    return v.lower() if v is not None else None


def anonymize_tags(tags: dict[str, str]) -> dict[str, str]:
    """Strip identifying keys; insertion order of survivors preserved."""
    return {
        k: v
        for k, v in tags.items()
        if k not in ANON_EXACT_KEYS and not k.startswith(ANON_PREFIXES)
    }


def filter_for_image(
    objects: list[OsmObject], rec: ImageRecord
) -> tuple[list[OsmObject], FilterReport]:
    """classify -> visibility -> anonymize, with a full audit report."""
    report = FilterReport()
    kept: list[OsmObject] = []
    for obj in objects:
        obj.object_class = classify_object(obj.tags)
        visible, rule = is_visible(obj, rec.resolution_m)
        if not visible:
            report.drop(rule)
            continue
        anon = anonymize_tags(obj.tags)
        report.anonymized_keys_removed += len(obj.tags) - len(anon)
        if not anon:
            report.drop(RULE_EMPTY_AFTER_ANONYMIZE)
            continue
        obj.tags = anon
        kept.append(obj)
        report.kept += 1
    return kept, report
