"""Deterministic rasterization of intent sketches onto RGB8 frames.

Integer midpoint algorithms, no anti-aliasing: the same (frame, sketch,
style) always yields the same bytes, so golden-image digests are stable.
Painter's order is fixed: boxes, then arrows, then points.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from sketchloop.sketch import SketchValidationError, VisualSketch, validate_sketch

RGB = tuple[int, int, int]


@dataclass(frozen=True)
class RasterImage:
    """Immutable row-major RGB8 image."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        if len(self.pixels) != self.width * self.height * 3:
            raise ValueError(
                f"pixel buffer length {len(self.pixels)} != {self.width}x{self.height}x3")

    @classmethod
    def filled(cls, width: int, height: int, color: RGB = (0, 0, 0)) -> "RasterImage":
        return cls(width, height, bytes(color) * (width * height))

    def pixel(self, x: int, y: int) -> RGB:
        i = (y * self.width + x) * 3
        return self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]


@dataclass(frozen=True)
class SketchStyle:
    """Colors and stroke geometry for sketch overlays."""

    box_color: RGB = (0, 200, 0)
    point_color: RGB = (230, 40, 40)
    arrow_color: RGB = (40, 90, 230)
    rotation_color: RGB = (255, 150, 30)
    line_thickness: int = 1
    point_radius: int = 3
    goal_point_marker: str = "star5"

    def __post_init__(self):
        if self.line_thickness < 1 or self.point_radius < 1:
            raise ValueError("thickness and radius must be >= 1")


DEFAULT_STYLE = SketchStyle()


class Canvas:
    """Mutable drawing surface; freeze() returns the immutable image."""

    def __init__(self, image: RasterImage):
        self.width = image.width
        self.height = image.height
        self.buf = bytearray(image.pixels)

    def freeze(self) -> RasterImage:
        return RasterImage(self.width, self.height, bytes(self.buf))

    def put(self, x: int, y: int, color: RGB):
        if 0 <= x < self.width and 0 <= y < self.height:
            i = (y * self.width + x) * 3
            self.buf[i] = color[0]
            self.buf[i + 1] = color[1]
            self.buf[i + 2] = color[2]

    def stamp(self, x: int, y: int, color: RGB, thickness: int):
        if thickness <= 1:
            self.put(x, y, color)
            return
        r = thickness // 2
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                self.put(x + dx, y + dy, color)

    def hline(self, x0: int, x1: int, y: int, color: RGB):
        if y < 0 or y >= self.height:
            return
        x0 = max(0, min(x0, x1))
        x1 = min(self.width - 1, max(x0, x1))
        if x1 < x0:
            return
        row = bytes(color) * (x1 - x0 + 1)
        start = (y * self.width + x0) * 3
        self.buf[start:start + len(row)] = row

    def fill_rect(self, x0: int, y0: int, x1: int, y1: int, color: RGB):
        for y in range(max(0, y0), min(self.height - 1, y1) + 1):
            self.hline(x0, x1, y, color)

    def line(self, x0: int, y0: int, x1: int, y1: int, color: RGB, thickness: int = 1):
        # Bresenham
        dx = abs(x1 - x0)
        dy = -abs(y1 - y0)
        sx = 1 if x0 < x1 else -1
        sy = 1 if y0 < y1 else -1
        err = dx + dy
        x, y = x0, y0
        while True:
            self.stamp(x, y, color, thickness)
            if x == x1 and y == y1:
                break
            e2 = 2 * err
            if e2 >= dy:
                err += dy
                x += sx
            if e2 <= dx:
                err += dx
                y += sy

    def rect_outline(self, x0: int, y0: int, x1: int, y1: int, color: RGB, thickness: int = 1):
        for t in range(thickness):
            a, b = x0 + t, x1 - t
            c, d = y0 + t, y1 - t
            if a > b or c > d:
                break
            self.hline(a, b, c, color)
            self.hline(a, b, d, color)
            for y in range(c, d + 1):
                self.put(a, y, color)
                self.put(b, y, color)

    def fill_disc(self, cx: int, cy: int, r: int, color: RGB):
        for dy in range(-r, r + 1):
            half = math.isqrt(r * r - dy * dy)
            self.hline(cx - half, cx + half, cy + dy, color)

    def arc_points(self, rx: int, ry: int) -> list[tuple[int, int]]:
        """Midpoint ellipse offsets (full perimeter), integer-exact."""
        pts = set()
        x, y = 0, ry
        d1 = ry * ry - rx * rx * ry + 0.25 * rx * rx
        dx_ = 2 * ry * ry * x
        dy_ = 2 * rx * rx * y
        while dx_ < dy_:
            for sx in (1, -1):
                for sy in (1, -1):
                    pts.add((sx * x, sy * y))
            if d1 < 0:
                x += 1
                dx_ += 2 * ry * ry
                d1 += dx_ + ry * ry
            else:
                x += 1
                y -= 1
                dx_ += 2 * ry * ry
                dy_ -= 2 * rx * rx
                d1 += dx_ - dy_ + ry * ry
        d2 = (ry * ry * (x + 0.5) ** 2 + rx * rx * (y - 1) ** 2 - rx * rx * ry * ry)
        while y >= 0:
            for sx in (1, -1):
                for sy in (1, -1):
                    pts.add((sx * x, sy * y))
            if d2 > 0:
                y -= 1
                dy_ -= 2 * rx * rx
                d2 += rx * rx - dy_
            else:
                y -= 1
                x += 1
                dx_ += 2 * ry * ry
                dy_ -= 2 * rx * rx
                d2 += dx_ - dy_ + rx * rx
        return sorted(pts)

    def arrow_head(self, x: int, y: int, ux: float, uy: float, color: RGB, thickness: int, size: int):
        """Two barbs at the tip, pointing back along the direction (ux, uy)."""
        norm = math.hypot(ux, uy)
        if norm == 0:
            return
        rx, ry = -ux / norm, -uy / norm
        for sign in (1, -1):
            ca = math.cos(math.radians(30))
            sa = math.sin(math.radians(30)) * sign
            bx = rx * ca - ry * sa
            by = rx * sa + ry * ca
            self.line(x, y, int(round(x + bx * size)), int(round(y + by * size)), color, thickness)


# 5x7 bitmaps for the three axis letters rendered beside rotation glyphs.
_LETTERS = {
    "x": ["#...#", ".#.#.", "..#..", ".#.#.", "#...#"],
    "y": ["#...#", ".#.#.", "..#..", "..#..", "..#.."],
    "z": ["#####", "...#.", "..#..", ".#...", "#####"],
}


def _draw_letter(canvas: Canvas, letter: str, x: int, y: int, color: RGB):
    rows = _LETTERS[letter]
    for dy, row in enumerate(rows):
        for dx, cell in enumerate(row):
            if cell == "#":
                canvas.put(x + dx, y + dy, color)


def _draw_rotation_glyph(canvas: Canvas, cx: int, cy: int, axis: str, direction: str,
                         color: RGB, thickness: int, radius: int):
    """270-degree arc with a head; x/y axes use a 2:1 foreshortened ellipse."""
    if axis == "z":
        rx, ry = radius, radius
    elif axis == "x":
        rx, ry = radius, max(2, radius // 2)
    else:
        rx, ry = max(2, radius // 2), radius
    for dx, dy in canvas.arc_points(rx, ry):
        if dx > 0 and dy < 0:
            continue  # the gap quadrant (screen upper right)
        canvas.stamp(cx + dx, cy + dy, color, thickness)
    head = max(4, radius // 2 + 2)
    if direction == "ccw":
        # gap end at the right horizontal extreme; travel direction is upward
        canvas.arrow_head(cx + rx, cy, 0.0, -1.0, color, thickness, head)
    else:
        # gap end at the top vertical extreme; travel direction is rightward
        canvas.arrow_head(cx, cy - ry, 1.0, 0.0, color, thickness, head)
    _draw_letter(canvas, axis, cx - 2, cy - 2, color)


def _draw_star(canvas: Canvas, cx: int, cy: int, r: int, color: RGB, thickness: int):
    for k in range(5):
        a = math.radians(-90 + 72 * k)
        ex = int(round(cx + r * math.cos(a)))
        ey = int(round(cy + r * math.sin(a)))
        canvas.line(cx, cy, ex, ey, color, thickness)


def render_sketch(frame: RasterImage, sketch: VisualSketch, style: SketchStyle = DEFAULT_STYLE) -> RasterImage:
    """Draw the sketch over a copy of the frame; the input is untouched."""
    if (frame.width, frame.height) != (sketch.frame.width, sketch.frame.height):
        raise ValueError(
            f"frame dims {frame.width}x{frame.height} do not match sketch frame "
            f"{sketch.frame.width}x{sketch.frame.height}")
    report = validate_sketch(sketch)
    if not report.ok:
        raise SketchValidationError(report)

    canvas = Canvas(frame)
    t = style.line_thickness

    for b in sketch.boxes:
        canvas.rect_outline(int(round(b.x1)), int(round(b.y1)),
                            int(round(b.x2)), int(round(b.y2)), style.box_color, t)

    for a in sketch.translation_arrows:
        p0 = sketch.points[a.start_index]
        p1 = sketch.points[a.end_index]
        x0, y0 = int(round(p0.x)), int(round(p0.y))
        x1, y1 = int(round(p1.x)), int(round(p1.y))
        canvas.line(x0, y0, x1, y1, style.arrow_color, t)
        canvas.arrow_head(x1, y1, x1 - x0, y1 - y0, style.arrow_color, t,
                          size=4 + 2 * t)

    for r in sketch.rotation_arrows:
        c = sketch.points[r.center_index]
        _draw_rotation_glyph(canvas, int(round(c.x)), int(round(c.y)), r.axis, r.direction,
                             style.rotation_color, t, radius=max(6, 3 * style.point_radius))

    for p in sketch.points:
        x, y = int(round(p.x)), int(round(p.y))
        if p.label == "goal" and style.goal_point_marker == "star5":
            _draw_star(canvas, x, y, 2 * style.point_radius, style.point_color, t)
        else:
            canvas.fill_disc(x, y, style.point_radius, style.point_color)

    return canvas.freeze()


def image_digest(frame: RasterImage) -> str:
    """64-bit content hash (hex) over dimensions and pixel bytes."""
    h = hashlib.blake2b(digest_size=8)
    h.update(f"{frame.width}x{frame.height}:".encode("ascii"))
    h.update(frame.pixels)
    return h.hexdigest()


def write_ppm(image: RasterImage, path) -> None:
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (image.width, image.height))
        f.write(image.pixels)


def ppm_bytes(image: RasterImage) -> bytes:
    return b"P6\n%d %d\n255\n" % (image.width, image.height) + image.pixels


def read_ppm(path) -> RasterImage:
    with open(path, "rb") as f:
        data = f.read()
    return parse_ppm(data)


def parse_ppm(data: bytes) -> RasterImage:
    if not data.startswith(b"P6"):
        raise ValueError("not a P6 PPM")
    # header: magic, width, height, maxval, then a single whitespace byte
    fields: list[int] = []
    i = 2
    while len(fields) < 3:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        fields.append(int(data[i:j]))
        i = j
    i += 1  # the single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    pixels = data[i:i + w * h * 3]
    return RasterImage(w, h, pixels)
