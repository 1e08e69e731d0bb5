"""Layer classification, styling, and zoom visibility.

The built-in style table is a simplified carto-inspired ruleset: first
matching rule wins, unmatched objects fall back to the `other` layer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..geo import linestring_length, polygon_area
from ..ingest import OsmObject

DEFAULT_MIN_PX_POLYGON = 4.0
DEFAULT_MIN_PX_LINE = 8.0


@dataclass(frozen=True)
class LayerStyle:
    layer: str
    z_order: int
    label_priority: int
    fill: tuple | None = None
    stroke: tuple | None = None
    stroke_width_px: int = 1
    glyph: str | None = None
    glyph_color: tuple | None = None
    min_px_polygon: float = DEFAULT_MIN_PX_POLYGON
    min_px_line: float = DEFAULT_MIN_PX_LINE


class StyleTable:
    def __init__(self, data: dict):
        self.version = data["version"]
        self.background = tuple(data["background"])
        self.font_px = int(data.get("font_px", 12))
        self._layers = data["layers"]
        self._rules = data["rules"]
        self._fallback = data["fallback"]

    @classmethod
    def load(cls, path: str | Path | None = None) -> "StyleTable":
        if path is None:
            text = resources.files("osmda.render").joinpath(
                "style_table.json"
            ).read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls(json.loads(text))

    def _make(self, rule: dict) -> LayerStyle:
        layer = rule["layer"]
        ldef = self._layers[layer]
        return LayerStyle(
            layer=layer,
            z_order=ldef["z_order"],
            label_priority=ldef["label_priority"],
            fill=tuple(rule["fill"]) if "fill" in rule else None,
            stroke=tuple(rule["stroke"]) if "stroke" in rule else None,
            stroke_width_px=rule.get("stroke_width_px", 1),
            glyph=rule.get("glyph"),
            glyph_color=tuple(rule["glyph_color"]) if "glyph_color" in rule else None,
            min_px_polygon=ldef.get("min_px_polygon", DEFAULT_MIN_PX_POLYGON),
            min_px_line=ldef.get("min_px_line", DEFAULT_MIN_PX_LINE),
        )

    def assign_layer(self, obj: OsmObject) -> LayerStyle:
        for rule in self._rules:
            key = rule["key"]
            if key not in obj.tags:
                continue
            if "value" in rule and obj.tags[key] != rule["value"]:
                continue
            return self._make(rule)
        return self._make(self._fallback)


def assign_layer(obj: OsmObject, table: StyleTable | None = None) -> LayerStyle:
    return (table or _default_table()).assign_layer(obj)


_DEFAULT: StyleTable | None = None


def _default_table() -> StyleTable:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = StyleTable.load()
    return _DEFAULT


def zoom_visible(obj: OsmObject, resolution_m: float, style: LayerStyle) -> bool:
    """Suppress features whose projected pixel extent is below the layer
    threshold. Ties are inclusive; points are always visible."""
    g = obj.geometry
    if g.kind == "polygon":
        extent_px = math.sqrt(polygon_area(g)) / resolution_m
        return extent_px >= style.min_px_polygon
    if g.kind == "linestring":
        return linestring_length(g) / resolution_m >= style.min_px_line
    return True
