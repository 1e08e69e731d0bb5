from .labels import LabelCandidate, boxes_intersect, measure_text, place_labels
from .style import LayerStyle, StyleTable, assign_layer, zoom_visible
from .tile import RenderedTile, render_svg, render_tile

__all__ = [
    "LabelCandidate",
    "LayerStyle",
    "RenderedTile",
    "StyleTable",
    "assign_layer",
    "boxes_intersect",
    "measure_text",
    "place_labels",
    "render_svg",
    "render_tile",
    "zoom_visible",
]
