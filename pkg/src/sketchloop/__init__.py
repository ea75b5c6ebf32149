"""Sketch-guided tabletop manipulation toolkit."""

from sketchloop.sketch import (
    Box,
    ImageFrameMeta,
    Point,
    RotationArrow,
    TranslationArrow,
    ValidationReport,
    VisualSketch,
    iou,
    parse_sketch,
    serialize_sketch,
    validate_sketch,
)

__all__ = [
    "Box",
    "ImageFrameMeta",
    "Point",
    "RotationArrow",
    "TranslationArrow",
    "ValidationReport",
    "VisualSketch",
    "iou",
    "parse_sketch",
    "serialize_sketch",
    "validate_sketch",
]

__version__ = "0.1.0"
