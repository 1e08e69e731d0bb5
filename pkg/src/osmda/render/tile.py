"""Raster tile rendering co-registered to a source image.

Paint order is ascending layer z_order, then placed labels on top. The
raster is a pure, deterministic function of (record, objects, style).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from PIL import Image, ImageDraw, ImageFont

from ..geo import ImageRecord, footprint_transform
from ..ingest import OsmObject
from .labels import LabelCandidate, place_labels
from .style import StyleTable, zoom_visible

log = logging.getLogger(__name__)


@dataclass
class RenderedTile:
    width_px: int
    height_px: int
    image: Image.Image
    manifest: list[dict] = field(default_factory=list)
    blank: bool = False

    def save_png(self, path):
        self.image.save(path, format="PNG")


def _anchor(coords_px):
    if len(coords_px) == 1:
        return coords_px[0]
    # polygon: drop the closing vertex before averaging
    ring = coords_px[:-1] if coords_px[0] == coords_px[-1] else coords_px
    n = len(ring)
    return (sum(p[0] for p in ring) / n, sum(p[1] for p in ring) / n)


def render_tile(
    rec: ImageRecord,
    objects: list[OsmObject],
    style_table: StyleTable | None = None,
) -> RenderedTile:
    table = style_table or StyleTable.load()
    tf = footprint_transform(rec)
    canvas = Image.new("RGBA", (rec.width_px, rec.height_px), table.background)
    draw = ImageDraw.Draw(canvas)

    visible = []
    for obj in objects:
        style = table.assign_layer(obj)
        if zoom_visible(obj, rec.resolution_m, style):
            visible.append((obj, style))
    # stable paint order: z_order, then osm id for determinism within a layer
    visible.sort(key=lambda pair: (pair[1].z_order, pair[0].osm_id))

    candidates: list[LabelCandidate] = []
    for obj, style in visible:
        pts = [tf.forward(lon, lat) for lon, lat in obj.geometry.coords]
        kind = obj.geometry.kind
        if kind == "polygon":
            if style.fill is not None:
                draw.polygon(pts, fill=style.fill)
            if style.stroke is not None:
                draw.line(pts, fill=style.stroke, width=style.stroke_width_px)
        elif kind == "linestring":
            stroke = style.stroke or (120, 120, 120, 255)
            draw.line(pts, fill=stroke, width=style.stroke_width_px)
        else:
            if style.glyph is not None:
                x, y = pts[0]
                r = 3
                color = style.glyph_color or (60, 60, 60, 255)
                if style.glyph == "square":
                    draw.rectangle([x - r, y - r, x + r, y + r], fill=color)
                else:
                    draw.ellipse([x - r, y - r, x + r, y + r], fill=color)
        if obj.label:
            candidates.append(
                LabelCandidate(
                    text=obj.label,
                    anchor=_anchor(pts),
                    priority=style.label_priority,
                    font_px=table.font_px,
                )
            )

    placed = place_labels(candidates, (rec.width_px, rec.height_px))
    font = ImageFont.load_default()
    manifest = []
    for cand in placed:
        box = cand.box
        draw.text((box[0], box[1]), cand.text, fill=(20, 20, 20, 255), font=font)
        manifest.append(
            {
                "text": cand.text,
                "box": [round(v, 2) for v in box],
                "anchor": [round(v, 2) for v in cand.anchor],
                "priority": cand.priority,
            }
        )

    blank = not visible
    if blank:
        log.warning("tile %s rendered with zero visible objects", rec.id)
    return RenderedTile(
        width_px=rec.width_px,
        height_px=rec.height_px,
        image=canvas,
        manifest=manifest,
        blank=blank,
    )


def render_svg(rec: ImageRecord, objects: list[OsmObject],
               style_table: StyleTable | None = None) -> str:
    """Minimal SVG mirror of the raster tile, for debugging."""
    table = style_table or StyleTable.load()
    tf = footprint_transform(rec)

    def rgba(c):
        return f"rgba({c[0]},{c[1]},{c[2]},{c[3] / 255:.2f})"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{rec.width_px}" '
        f'height="{rec.height_px}">',
        f'<rect width="100%" height="100%" fill="{rgba(table.background)}"/>',
    ]
    styled = sorted(
        ((o, table.assign_layer(o)) for o in objects),
        key=lambda pair: (pair[1].z_order, pair[0].osm_id),
    )
    for obj, style in styled:
        if not zoom_visible(obj, rec.resolution_m, style):
            continue
        pts = [tf.forward(lon, lat) for lon, lat in obj.geometry.coords]
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        if obj.geometry.kind == "polygon" and style.fill is not None:
            parts.append(f'<polygon points="{path}" fill="{rgba(style.fill)}"/>')
        elif obj.geometry.kind == "linestring":
            stroke = style.stroke or (120, 120, 120, 255)
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="{rgba(stroke)}" '
                f'stroke-width="{style.stroke_width_px}"/>'
            )
        elif style.glyph is not None:
            x, y = pts[0]
            color = style.glyph_color or (60, 60, 60, 255)
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{rgba(color)}"/>')
    parts.append("</svg>")
    return "\n".join(parts)
