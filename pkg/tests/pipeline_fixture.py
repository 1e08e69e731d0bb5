"""Bundled 20-image corpus and scripted endpoints for pipeline tests."""

import hashlib
import json
import math

import numpy as np
from PIL import Image

from conftest import chat_body
from osmda.curation import write_embeddings
from osmda.geo import EARTH_RADIUS_M

N_IMAGES = 20
WIDTH = HEIGHT = 64
RESOLUTION_M = 1.0


def image_center(i):
    return (0.01 * i, 0.005 * (i % 5))


def footprint(i):
    lonc, latc = image_center(i)
    dlat = math.degrees(HEIGHT * RESOLUTION_M / EARTH_RADIUS_M) / 2
    dlon = math.degrees(
        WIDTH * RESOLUTION_M / (EARTH_RADIUS_M * math.cos(math.radians(latc)))
    ) / 2
    return [lonc - dlon, latc - dlat, lonc + dlon, latc + dlat]


def _square(center, side_m, latc):
    lonc, lat = center
    hl = math.degrees(side_m / EARTH_RADIUS_M) / 2
    hw = math.degrees(side_m / (EARTH_RADIUS_M * math.cos(math.radians(latc)))) / 2
    return [
        [lonc - hw, lat - hl], [lonc + hw, lat - hl], [lonc + hw, lat + hl],
        [lonc - hw, lat + hl], [lonc - hw, lat - hl],
    ]


def build_fixture(root):
    """Create images, manifest, OSM extract, and embeddings under `root`."""
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    ids = [f"img{i:02d}" for i in range(N_IMAGES)]

    manifest = root / "images_manifest.jsonl"
    with open(manifest, "w") as f:
        for i, image_id in enumerate(ids):
            png = images_dir / f"{image_id}.png"
            Image.new("RGB", (WIDTH, HEIGHT), (i * 12 % 255, 80, 40)).save(
                png, format="PNG"
            )
            f.write(json.dumps({
                "id": image_id,
                "footprint": footprint(i),
                "width_px": WIDTH,
                "height_px": HEIGHT,
                "resolution_m": RESOLUTION_M,
                "image_path": str(png),
            }) + "\n")

    extract = root / "extract.jsonl"
    with open(extract, "w") as f:
        oid = 1
        for i in range(N_IMAGES):
            lonc, latc = image_center(i)
            tag_choices = [
                {"building": "yes", "name": f"House {i}"},
                {"landuse": "farmland"},
                {"amenity": "school"},
                {"leisure": "park"},
                {"natural": "water"},
            ]
            for j in range(2 + i % 3):
                tags = dict(tag_choices[(i + j) % len(tag_choices)])
                geom = {
                    "type": "polygon",
                    "coordinates": _square(
                        (lonc + 0.00005 * j, latc + 0.00004 * j), 20.0, latc
                    ),
                }
                f.write(json.dumps(
                    {"id": oid, "tags": tags, "geometry": geom}
                ) + "\n")
                oid += 1
            # one invisible object per image that filtering must drop
            f.write(json.dumps({
                "id": oid,
                "tags": {"man_made": "pipeline"},
                "geometry": {"type": "point", "coordinates": [[lonc, latc]]},
            }) + "\n")
            oid += 1

    rng = np.random.default_rng(42)
    emb = root / "embeddings.bin"
    write_embeddings(emb, rng.normal(size=(N_IMAGES, 6)).astype(np.float32), ids)
    return {"manifest": manifest, "extract": extract, "embeddings": emb,
            "ids": ids, "images_dir": images_dir}


def script_llm(payload):
    """Deterministic 1-2 word label derived from the prompt text."""
    text = payload["messages"][0]["content"][0]["text"]
    for key in ("building", "farmland", "school", "park", "water"):
        if key in text:
            return 200, chat_body(f"{key} area")
    return 200, chat_body("generic feature")


def script_vlm(payload):
    content = payload["messages"][0]["content"]
    digest = hashlib.sha256(
        json.dumps(content, sort_keys=True).encode()
    ).hexdigest()[:8]
    return 200, chat_body(f"A satellite scene ({digest}) with mapped features.")


def script_judge(payload):
    return 200, chat_body("4", top_logprobs={"4": math.log(0.7),
                                             "5": math.log(0.3)})
