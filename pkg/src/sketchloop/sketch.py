"""Geometric intent-sketch primitives: boxes, keypoints, arrows on an image plane.

Coordinates are absolute pixels, origin top-left, x rightward, y downward.
A sketch always carries the metadata of the reference view it was drawn on,
so renderers and editors agree on bounds. All types are immutable values.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

ROTATION_AXES = ("x", "y", "z")
ROTATION_DIRS = ("cw", "ccw")

# Wire-format coordinate precision: one decimal place (0.1 px).
COORD_DECIMALS = 1


class SketchError(Exception):
    """Base class for sketch serialization/validation failures."""


class SketchParseError(SketchError):
    """Malformed record syntax. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class SketchValidationError(SketchError):
    """Structurally readable record whose content violates an invariant."""

    def __init__(self, report: "ValidationReport"):
        super().__init__("; ".join(v.rule for v in report.violations) or "invalid sketch")
        self.report = report


class SketchWarning(UserWarning):
    """Non-fatal parse notes, e.g. unknown fields that were ignored."""


@dataclass(frozen=True)
class ImageFrameMeta:
    """Pixel dimensions and identifier of the reference camera view."""

    width: int
    height: int
    view_id: str = "ego"

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame dims must be positive, got {self.width}x{self.height}")

    @property
    def diagonal(self) -> float:
        return (self.width ** 2 + self.height ** 2) ** 0.5


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in xyxy pixel coordinates (top-left, bottom-right)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def area(self) -> float:
        return max(0.0, self.x2 - self.x1) * max(0.0, self.y2 - self.y1)

    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0


@dataclass(frozen=True)
class Point:
    """Keypoint on the image plane with an optional short label."""

    x: float
    y: float
    label: str | None = None


@dataclass(frozen=True)
class TranslationArrow:
    """Intended end-effector motion from one keypoint to another (by index)."""

    start_index: int
    end_index: int


@dataclass(frozen=True)
class RotationArrow:
    """Rotation cue centered on a keypoint, about a canonical axis."""

    center_index: int
    axis: str
    direction: str


@dataclass(frozen=True)
class VisualSketch:
    """Sparse tuple of geometric primitives expressing spatial intent.

    Arrows reference keypoints by index into ``points``, so moving a point
    implicitly moves every arrow anchored to it.
    """

    frame: ImageFrameMeta
    boxes: tuple[Box, ...] = ()
    points: tuple[Point, ...] = ()
    translation_arrows: tuple[TranslationArrow, ...] = ()
    rotation_arrows: tuple[RotationArrow, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "translation_arrows", tuple(self.translation_arrows))
        object.__setattr__(self, "rotation_arrows", tuple(self.rotation_arrows))

    def is_empty(self) -> bool:
        return not (self.boxes or self.points or self.translation_arrows or self.rotation_arrows)

    def point_by_label(self, label: str) -> Point | None:
        for p in self.points:
            if p.label == label:
                return p
        return None


@dataclass(frozen=True)
class Violation:
    """One invariant breach: which primitive, and which rule it broke."""

    primitive: str
    index: int | None
    rule: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "violations", tuple(self.violations))

    @property
    def ok(self) -> bool:
        return not self.violations

    def messages(self) -> list[str]:
        return [f"{v.primitive}[{v.index}]: {v.rule}" if v.index is not None else f"{v.primitive}: {v.rule}"
                for v in self.violations]


def validate_sketch(sketch: VisualSketch) -> ValidationReport:
    """Check every primitive invariant. Violations are data, not exceptions."""
    w, h = float(sketch.frame.width), float(sketch.frame.height)
    out: list[Violation] = []

    for i, b in enumerate(sketch.boxes):
        if not (b.x1 < b.x2 and b.y1 < b.y2):
            out.append(Violation("box", i, "degenerate box: requires x1 < x2 and y1 < y2"))
        if b.x1 < 0 or b.y1 < 0 or b.x2 > w or b.y2 > h:
            out.append(Violation("box", i, "box outside frame"))

    for i, p in enumerate(sketch.points):
        if not (0 <= p.x <= w and 0 <= p.y <= h):
            out.append(Violation("point", i, "point outside frame"))

    n = len(sketch.points)
    for i, a in enumerate(sketch.translation_arrows):
        for name, idx in (("start", a.start_index), ("end", a.end_index)):
            if not (isinstance(idx, int) and 0 <= idx < n):
                out.append(Violation("translation_arrow", i, f"unresolved {name} anchor index {idx}"))
        if a.start_index == a.end_index:
            out.append(Violation("translation_arrow", i, "degenerate arrow: start_index equals end_index"))

    for i, r in enumerate(sketch.rotation_arrows):
        if not (isinstance(r.center_index, int) and 0 <= r.center_index < n):
            out.append(Violation("rotation_arrow", i, f"unresolved center anchor index {r.center_index}"))
        if r.axis not in ROTATION_AXES:
            out.append(Violation("rotation_arrow", i, "axis not in {x,y,z}"))
        if r.direction not in ROTATION_DIRS:
            out.append(Violation("rotation_arrow", i, "direction not in {cw,ccw}"))

    return ValidationReport(tuple(out))


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes using continuous area.

    Returns 0 when the interiors are disjoint (touching edges count as
    disjoint: the shared boundary has zero area).
    """
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    return inter / union


def _coord(v: float) -> float:
    # Quantize for the wire format; float() guards against int inputs so
    # json always renders a decimal point.
    return round(float(v), COORD_DECIMALS)


def sketch_to_wire_dict(sketch: VisualSketch) -> dict:
    """Wire-shaped dict with the canonical key order and quantized coordinates."""
    return {
        "frame": {"view": sketch.frame.view_id, "w": sketch.frame.width, "h": sketch.frame.height},
        "bbox": [[_coord(b.x1), _coord(b.y1), _coord(b.x2), _coord(b.y2)] for b in sketch.boxes],
        "points": [{"x": _coord(p.x), "y": _coord(p.y), "label": p.label} for p in sketch.points],
        "arrows_t": [[a.start_index, a.end_index] for a in sketch.translation_arrows],
        "arrows_r": [{"p": r.center_index, "axis": r.axis, "dir": r.direction}
                     for r in sketch.rotation_arrows],
    }


def serialize_sketch(sketch: VisualSketch) -> str:
    """Canonical single-line record: fixed key order, 0.1 px precision, UTF-8.

    Byte-deterministic for equal inputs. Refuses invalid sketches with the
    validation report attached (quantization is applied before the check so
    a record we emit always parses back cleanly).
    """
    report = validate_sketch(sketch)
    if not report.ok:
        raise SketchValidationError(report)
    quantized = VisualSketch(
        frame=sketch.frame,
        boxes=tuple(Box(_coord(b.x1), _coord(b.y1), _coord(b.x2), _coord(b.y2)) for b in sketch.boxes),
        points=tuple(Point(_coord(p.x), _coord(p.y), p.label) for p in sketch.points),
        translation_arrows=sketch.translation_arrows,
        rotation_arrows=sketch.rotation_arrows,
    )
    report = validate_sketch(quantized)
    if not report.ok:
        raise SketchValidationError(report)
    return json.dumps(sketch_to_wire_dict(quantized), separators=(",", ":"), ensure_ascii=False)


_TOP_KEYS = ("frame", "bbox", "points", "arrows_t", "arrows_r")


def _warn_unknown(seen: dict, allowed: tuple[str, ...], where: str, warnings_out: list[str]):
    for k in seen:
        if k not in allowed:
            warnings_out.append(f"ignored unknown field {k!r} in {where}")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SketchValidationError(ValidationReport((Violation(where, None, f"missing field {key!r}"),)))
    return obj[key]


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SketchValidationError(ValidationReport((Violation(where, None, "expected a number"),)))
    return float(v)


def parse_sketch(text: str | bytes) -> VisualSketch:
    """Parse a canonical or whitespace-relaxed record into a validated sketch.

    Unknown fields are ignored with a SketchWarning. Malformed syntax raises
    SketchParseError with the byte offset; a well-formed record that breaks
    an invariant raises SketchValidationError.
    """
    if isinstance(text, bytes):
        raw = text.decode("utf-8")
    else:
        raw = text
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        byte_offset = len(raw[: e.pos].encode("utf-8"))
        raise SketchParseError(e.msg, byte_offset) from e

    if not isinstance(data, dict):
        raise SketchValidationError(ValidationReport((Violation("record", None, "top level must be an object"),)))

    notes: list[str] = []
    _warn_unknown(data, _TOP_KEYS, "record", notes)

    frame_obj = _require(data, "frame", "record")
    if not isinstance(frame_obj, dict):
        raise SketchValidationError(ValidationReport((Violation("frame", None, "frame must be an object"),)))
    _warn_unknown(frame_obj, ("view", "w", "h"), "frame", notes)
    try:
        frame = ImageFrameMeta(
            width=int(_number(_require(frame_obj, "w", "frame"), "frame.w")),
            height=int(_number(_require(frame_obj, "h", "frame"), "frame.h")),
            view_id=str(_require(frame_obj, "view", "frame")),
        )
    except ValueError as e:
        raise SketchValidationError(ValidationReport((Violation("frame", None, str(e)),))) from e

    boxes = []
    for i, item in enumerate(_as_list(_require(data, "bbox", "record"), "bbox")):
        if not isinstance(item, list) or len(item) != 4:
            raise SketchValidationError(
                ValidationReport((Violation("box", i, "bbox entry must be [x1,y1,x2,y2]"),)))
        boxes.append(Box(*(_number(v, f"bbox[{i}]") for v in item)))

    points = []
    for i, item in enumerate(_as_list(_require(data, "points", "record"), "points")):
        if not isinstance(item, dict):
            raise SketchValidationError(ValidationReport((Violation("point", i, "point must be an object"),)))
        _warn_unknown(item, ("x", "y", "label"), f"points[{i}]", notes)
        label = item.get("label")
        if label is not None and not isinstance(label, str):
            raise SketchValidationError(ValidationReport((Violation("point", i, "label must be a string or null"),)))
        points.append(Point(_number(_require(item, "x", f"points[{i}]"), "x"),
                            _number(_require(item, "y", f"points[{i}]"), "y"), label))

    arrows_t = []
    for i, item in enumerate(_as_list(_require(data, "arrows_t", "record"), "arrows_t")):
        if not isinstance(item, list) or len(item) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in item):
            raise SketchValidationError(
                ValidationReport((Violation("translation_arrow", i, "arrows_t entry must be [start_idx,end_idx]"),)))
        arrows_t.append(TranslationArrow(item[0], item[1]))

    arrows_r = []
    for i, item in enumerate(_as_list(_require(data, "arrows_r", "record"), "arrows_r")):
        if not isinstance(item, dict):
            raise SketchValidationError(ValidationReport((Violation("rotation_arrow", i, "arrows_r entry must be an object"),)))
        _warn_unknown(item, ("p", "axis", "dir"), f"arrows_r[{i}]", notes)
        idx = _require(item, "p", f"arrows_r[{i}]")
        if not isinstance(idx, int) or isinstance(idx, bool):
            raise SketchValidationError(ValidationReport((Violation("rotation_arrow", i, "p must be an integer index"),)))
        arrows_r.append(RotationArrow(idx, str(_require(item, "axis", f"arrows_r[{i}]")),
                                      str(_require(item, "dir", f"arrows_r[{i}]"))))

    sketch = VisualSketch(frame, tuple(boxes), tuple(points), tuple(arrows_t), tuple(arrows_r))
    report = validate_sketch(sketch)
    if not report.ok:
        raise SketchValidationError(report)
    for note in notes:
        warnings.warn(SketchWarning(note), stacklevel=2)
    return sketch


def _as_list(v, where: str) -> list:
    if not isinstance(v, list):
        raise SketchValidationError(ValidationReport((Violation(where, None, "expected an array"),)))
    return v
