import hashlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import line_of_length, make_image_record, square_polygon
from osmda.geo import Geometry
from osmda.ingest import OsmObject
from osmda.render import (
    LabelCandidate,
    RenderedTile,
    StyleTable,
    boxes_intersect,
    measure_text,
    place_labels,
    render_svg,
    render_tile,
    zoom_visible,
)


def fixture_objects():
    return [
        OsmObject(1, {"landuse": "farmland"}, square_polygon(side_m=200.0),
                  label="farm field"),
        OsmObject(2, {"building": "yes"},
                  square_polygon(center=(0.0003, 0.0003), side_m=30.0),
                  label="small building"),
        OsmObject(3, {"highway": "residential"},
                  line_of_length(center=(0.0, -0.0004), length_m=220.0),
                  label="quiet street"),
        OsmObject(4, {"amenity": "bench"},
                  Geometry("point", ((0.0002, -0.0002),))),
    ]


class TestStyleTable:
    def test_loads_packaged_default(self):
        table = StyleTable.load()
        assert table.version == 1
        assert len(table.background) == 4

    def test_first_matching_rule_wins(self):
        table = StyleTable.load()
        obj = OsmObject(1, {"building": "yes", "amenity": "cafe"},
                        square_polygon())
        style = table.assign_layer(obj)
        assert style.layer in ("buildings", "amenities")

    def test_unmatched_falls_back(self):
        table = StyleTable.load()
        obj = OsmObject(1, {"unknown_key": "x"}, square_polygon())
        assert table.assign_layer(obj).layer == "other"

    def test_layer_ordering(self):
        table = StyleTable.load()
        landuse = table.assign_layer(
            OsmObject(1, {"landuse": "farmland"}, square_polygon())
        )
        buildings = table.assign_layer(
            OsmObject(2, {"building": "yes"}, square_polygon())
        )
        assert landuse.z_order < buildings.z_order


class TestZoomVisibility:
    def test_small_polygon_suppressed(self):
        table = StyleTable.load()
        obj = OsmObject(1, {"building": "yes"}, square_polygon(side_m=2.0))
        style = table.assign_layer(obj)
        assert not zoom_visible(obj, 1.0, style)  # 2 px < min_px_polygon

    def test_large_polygon_visible(self):
        table = StyleTable.load()
        obj = OsmObject(1, {"building": "yes"}, square_polygon(side_m=50.0))
        assert zoom_visible(obj, 1.0, table.assign_layer(obj))

    def test_short_line_suppressed_long_visible(self):
        table = StyleTable.load()
        short = OsmObject(1, {"highway": "path"}, line_of_length(length_m=3.0))
        long = OsmObject(2, {"highway": "path"}, line_of_length(length_m=100.0))
        assert not zoom_visible(short, 1.0, table.assign_layer(short))
        assert zoom_visible(long, 1.0, table.assign_layer(long))

    def test_points_always_visible(self):
        table = StyleTable.load()
        obj = OsmObject(1, {"amenity": "bench"},
                        Geometry("point", ((0.0, 0.0),)))
        assert zoom_visible(obj, 30.0, table.assign_layer(obj))


def random_candidates(rng, n, canvas=(400, 400)):
    words = ["park", "school", "river bend", "market", "old mill", "gas station"]
    return [
        LabelCandidate(
            text=rng.choice(words),
            anchor=(rng.uniform(0, canvas[0]), rng.uniform(0, canvas[1])),
            priority=rng.randint(0, 5),
        )
        for _ in range(n)
    ]


class TestLabelPlacement:
    def test_measure_text_monospace(self):
        w, h = measure_text("abcd", 12)
        assert (w, h) == (4 * 0.6 * 12, 12.0)

    def test_no_overlaps_100_random_sets(self):
        rng = random.Random(0)
        for _ in range(100):
            placed = place_labels(random_candidates(rng, rng.randint(0, 40)),
                                  (400, 400))
            boxes = [c.box for c in placed]
            for i in range(len(boxes)):
                for j in range(i + 1, len(boxes)):
                    assert not boxes_intersect(boxes[i], boxes[j])

    def test_maximality(self):
        rng = random.Random(1)
        for _ in range(30):
            cands = random_candidates(rng, 30)
            placed = place_labels(cands, (400, 400))
            placed_set = {id(c) for c in placed}
            for cand in cands:
                if id(cand) in placed_set:
                    continue
                box = cand.box
                in_canvas = (box[0] >= 0 and box[1] >= 0
                             and box[2] <= 400 and box[3] <= 400)
                if in_canvas:
                    # every suppressed in-canvas candidate must conflict
                    assert any(boxes_intersect(box, p.box) for p in placed)

    def test_priority_order(self):
        a = LabelCandidate("aaaa", (50, 50), priority=1)
        b = LabelCandidate("bbbb", (52, 52), priority=5)
        placed = place_labels([a, b], (200, 200))
        assert placed == [b]

    def test_out_of_canvas_skipped(self):
        c = LabelCandidate("edge label", (0, 0), priority=5)
        assert place_labels([c], (200, 200)) == []

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(0, 25))
    def test_no_overlap_property(self, seed, n):
        rng = random.Random(seed)
        placed = place_labels(random_candidates(rng, n), (300, 300))
        for i in range(len(placed)):
            for j in range(i + 1, len(placed)):
                assert not boxes_intersect(placed[i].box, placed[j].box)


class TestRenderTile:
    def test_dimensions_and_manifest(self):
        rec = make_image_record("t1", resolution_m=1.0)
        tile = render_tile(rec, fixture_objects())
        assert isinstance(tile, RenderedTile)
        assert tile.image.size == (256, 256)
        assert not tile.blank
        texts = {m["text"] for m in tile.manifest}
        assert texts <= {"farm field", "small building", "quiet street"}

    def test_blank_tile_flag(self):
        rec = make_image_record("t2", resolution_m=1.0)
        tile = render_tile(rec, [])
        assert tile.blank
        assert tile.manifest == []

    def test_byte_identical_across_runs(self, tmp_path):
        rec = make_image_record("t3", resolution_m=1.0)
        digests = []
        for run in range(2):
            objs = fixture_objects()
            if run:
                objs = list(reversed(objs))  # input order must not matter
            tile = render_tile(rec, objs)
            p = tmp_path / f"tile{run}.png"
            tile.save_png(p)
            digests.append(hashlib.sha256(p.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_manifest_labels_do_not_overlap(self):
        rec = make_image_record("t4", resolution_m=1.0)
        tile = render_tile(rec, fixture_objects())
        boxes = [m["box"] for m in tile.manifest]
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                assert not boxes_intersect(boxes[i], boxes[j])

    def test_svg_mirror(self):
        rec = make_image_record("t5", resolution_m=1.0)
        svg = render_svg(rec, fixture_objects())
        assert svg.startswith("<svg")
        assert "<polygon" in svg and "<polyline" in svg
