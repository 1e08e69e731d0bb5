"""OSM-grounded image curation, map rendering, captioning, and benchmarking."""

__version__ = "0.1.0"

from .filters import classify_object, filter_for_image, is_visible
from .geo import BBox, FootprintTransform, Geometry, ImageRecord
from .ingest import OsmObject, SpatialIndex, load_extract

__all__ = [
    "BBox",
    "FootprintTransform",
    "Geometry",
    "ImageRecord",
    "OsmObject",
    "SpatialIndex",
    "classify_object",
    "filter_for_image",
    "is_visible",
    "load_extract",
    "__version__",
]
