"""Occlusion-aware segmentation tooling: masks, labels, losses, PQ and pick planning."""

from .exceptions import DegeneratePolygonWarning, DimensionError, SchemaError, ValidationError
from .mask_core import BBox, BinaryMask, MultiClassMask, Polygon, rle_decode, rle_encode

__all__ = [
    "BBox",
    "BinaryMask",
    "DegeneratePolygonWarning",
    "DimensionError",
    "MultiClassMask",
    "Polygon",
    "SchemaError",
    "ValidationError",
    "rle_decode",
    "rle_encode",
]

__version__ = "0.1.0"
