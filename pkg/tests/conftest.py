import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from osmda.geo import EARTH_RADIUS_M, BBox, Geometry, ImageRecord


def make_image_record(image_id="img", center=(0.0, 0.0), width_px=256,
                      height_px=256, resolution_m=1.0, image_path=""):
    """ImageRecord with a footprint consistent with its pixel grid."""
    lonc, latc = center
    dlat = math.degrees(height_px * resolution_m / EARTH_RADIUS_M) / 2
    dlon = math.degrees(
        width_px * resolution_m / (EARTH_RADIUS_M * math.cos(math.radians(latc)))
    ) / 2
    return ImageRecord(
        id=image_id,
        footprint=BBox(lonc - dlon, latc - dlat, lonc + dlon, latc + dlat),
        width_px=width_px,
        height_px=height_px,
        resolution_m=resolution_m,
        image_path=image_path,
    )


def square_polygon(center=(0.0, 0.0), side_m=10.0):
    """Closed square ring of the given side length, in lon/lat degrees."""
    lonc, latc = center
    half_lat = math.degrees(side_m / EARTH_RADIUS_M) / 2
    half_lon = math.degrees(
        side_m / (EARTH_RADIUS_M * math.cos(math.radians(latc)))
    ) / 2
    ring = (
        (lonc - half_lon, latc - half_lat),
        (lonc + half_lon, latc - half_lat),
        (lonc + half_lon, latc + half_lat),
        (lonc - half_lon, latc + half_lat),
        (lonc - half_lon, latc - half_lat),
    )
    return Geometry("polygon", ring)


def line_of_length(center=(0.0, 0.0), length_m=10.0):
    lonc, latc = center
    half = math.degrees(
        length_m / (EARTH_RADIUS_M * math.cos(math.radians(latc)))
    ) / 2
    return Geometry("linestring", ((lonc - half, latc), (lonc + half, latc)))


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length) or b"{}")
        self.server.requests.append(payload)
        status, body = self.server.script(payload)
        data = body if isinstance(body, bytes) else json.dumps(body).encode()
        if isinstance(body, str):
            data = body.encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class MockEndpoint:
    """Scriptable HTTP endpoint running on a background thread."""

    def __init__(self):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.server.requests = []
        self.server.script = lambda payload: (200, {})
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    @property
    def requests(self):
        return self.server.requests

    def set_script(self, fn):
        self.server.script = fn

    def reply_text(self, fn_or_text):
        """Script an OpenAI-style chat response from text (or payload->text)."""

        def script(payload):
            text = fn_or_text(payload) if callable(fn_or_text) else fn_or_text
            return 200, chat_body(text)

        self.server.script = script

    def close(self):
        self.server.shutdown()
        self.server.server_close()


def chat_body(text, top_logprobs=None):
    choice = {"message": {"content": text}}
    if top_logprobs is not None:
        choice["logprobs"] = {
            "content": [
                {"top_logprobs": [
                    {"token": t, "logprob": lp} for t, lp in top_logprobs.items()
                ]}
            ]
        }
    return {"choices": [choice]}


@pytest.fixture
def endpoint():
    ep = MockEndpoint()
    yield ep
    ep.close()


@pytest.fixture
def endpoint_factory():
    created = []

    def make():
        ep = MockEndpoint()
        created.append(ep)
        return ep

    yield make
    for ep in created:
        ep.close()
