"""Sketch perturbations used to harden action policies against sketch error.

Boxes are jittered under an IoU floor, points within a disc of radius c;
arrows reference points by index, so they follow the jittered anchors for
free. Everything is pure given an explicit RNG.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace

from sketchloop.sketch import (
    Box,
    ImageFrameMeta,
    Point,
    SketchValidationError,
    VisualSketch,
    iou,
    validate_sketch,
)

# Corner jitter magnitude as a fraction of the box side.
_JITTER_FRACTION = 0.10
# Below this absolute jitter scale the perturbation degenerates to identity.
_MIN_SCALE_PX = 1e-9


@dataclass(frozen=True)
class AugmentConfig:
    """Perturbation bounds. point_radius_c of None means 2% of the frame diagonal."""

    iou_min: float = 0.8
    point_radius_c: float | None = None
    max_rejection_iters: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.iou_min <= 1.0):
            raise ValueError(f"iou_min must be in (0, 1], got {self.iou_min}")
        if self.point_radius_c is not None and self.point_radius_c < 0:
            raise ValueError("point_radius_c must be >= 0")

    def effective_radius(self, frame: ImageFrameMeta) -> float:
        if self.point_radius_c is not None:
            return self.point_radius_c
        return 0.02 * frame.diagonal


def perturb_box(box: Box, frame: ImageFrameMeta, cfg: AugmentConfig, rng: random.Random) -> Box:
    """Jitter all four corners independently, keeping IoU >= cfg.iou_min.

    Rejection sampling; after max_rejection_iters failures the jitter
    magnitude halves, so the loop provably terminates at the identity
    (which always satisfies the constraint).
    """
    w = box.x2 - box.x1
    h = box.y2 - box.y1
    fw, fh = float(frame.width), float(frame.height)
    scale = _JITTER_FRACTION
    while scale * max(w, h) > _MIN_SCALE_PX:
        for _ in range(cfg.max_rejection_iters):
            cand = Box(
                box.x1 + rng.uniform(-scale * w, scale * w),
                box.y1 + rng.uniform(-scale * h, scale * h),
                box.x2 + rng.uniform(-scale * w, scale * w),
                box.y2 + rng.uniform(-scale * h, scale * h),
            )
            if not (cand.x1 < cand.x2 and cand.y1 < cand.y2):
                continue
            if cand.x1 < 0 or cand.y1 < 0 or cand.x2 > fw or cand.y2 > fh:
                continue
            if iou(box, cand) >= cfg.iou_min:
                return cand
        scale /= 2.0
    return box


def jitter_point(p: Point, frame: ImageFrameMeta, cfg: AugmentConfig, rng: random.Random) -> Point:
    """Uniform-by-area draw from the disc of radius c around p, inside the frame."""
    c = cfg.effective_radius(frame)
    if c == 0:
        return p
    fw, fh = float(frame.width), float(frame.height)
    while True:
        dx = rng.uniform(-c, c)
        dy = rng.uniform(-c, c)
        if dx * dx + dy * dy > c * c:
            continue
        x, y = p.x + dx, p.y + dy
        if 0 <= x <= fw and 0 <= y <= fh:
            return replace(p, x=x, y=y)


def augment_sketch(sketch: VisualSketch, cfg: AugmentConfig, rng: random.Random) -> VisualSketch:
    """Perturb every box and jitter every point; arrows keep their indices."""
    report = validate_sketch(sketch)
    if not report.ok:
        raise SketchValidationError(report)
    out = VisualSketch(
        frame=sketch.frame,
        boxes=tuple(perturb_box(b, sketch.frame, cfg, rng) for b in sketch.boxes),
        points=tuple(jitter_point(p, sketch.frame, cfg, rng) for p in sketch.points),
        translation_arrows=sketch.translation_arrows,
        rotation_arrows=sketch.rotation_arrows,
    )
    report = validate_sketch(out)
    if not report.ok:  # pragma: no cover - closure holds by construction
        raise SketchValidationError(report)
    return out


def point_distance(a: Point, b: Point) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)
