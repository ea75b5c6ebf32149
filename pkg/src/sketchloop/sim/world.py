"""Deterministic 2D tabletop world: scene state, kinematics, ego-view camera.

Units are centimeters in world space. Physics is kinematic: the gripper
moves by clamped deltas, a held object follows it, closing near an object
attaches the nearest one, opening detaches in place. No contact dynamics;
"stacking" is colocation within a tolerance plus a registry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from sketchloop.render import Canvas, RasterImage
from sketchloop.sketch import Box, ImageFrameMeta

# Kinematic constants (cm).
MAX_STEP = 2.0
GRASP_RADIUS = 1.0
PLACE_TOL = 1.5

# Table and camera geometry: 60x45 cm table imaged at 4 px/cm.
TABLE_W = 60.0
TABLE_H = 45.0
PX_PER_CM = 4.0
FRAME_W = 240
FRAME_H = 180

SHAPES = ("block", "mug", "cup", "plate", "teapot")

SHAPE_SIZES = {"block": 3.0, "mug": 4.0, "cup": 3.5, "plate": 9.0, "teapot": 5.0}

COLOR_RGB = {
    "red": (200, 40, 40),
    "green": (40, 160, 50),
    "blue": (50, 80, 200),
    "yellow": (225, 205, 40),
    "white": (235, 235, 238),
    "purple": (140, 80, 190),
    "cyan": (80, 180, 205),
    "brown": (125, 75, 40),
}

TABLE_RGB = (205, 196, 180)
GRIPPER_RGB = (25, 25, 28)


@dataclass(frozen=True)
class SimObject:
    id: str
    shape: str
    position: tuple[float, float]
    size: float
    color: str


@dataclass(frozen=True)
class Gripper:
    position: tuple[float, float]
    open: bool = True
    held_object: str | None = None

    def __post_init__(self):
        if self.held_object is not None and self.open:
            raise ValueError("a held object implies a closed gripper")


@dataclass(frozen=True)
class SceneState:
    objects: tuple[SimObject, ...]
    gripper: Gripper
    table_bounds: tuple[float, float, float, float] = (0.0, 0.0, TABLE_W, TABLE_H)
    stacked_on: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "stacked_on", tuple(self.stacked_on))

    def object_by_id(self, object_id: str) -> SimObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(f"no object {object_id!r} in scene")

    def with_object_position(self, object_id: str, position: tuple[float, float]) -> "SceneState":
        objs = tuple(replace(o, position=position) if o.id == object_id else o for o in self.objects)
        return replace(self, objects=objs)


@dataclass(frozen=True)
class Camera:
    """Invertible affine world(cm) -> pixel map for the ego view."""

    sx: float = PX_PER_CM
    sy: float = PX_PER_CM
    ox: float = 0.0
    oy: float = 0.0
    frame: ImageFrameMeta = ImageFrameMeta(FRAME_W, FRAME_H, "ego")

    def world_to_pixel(self, x: float, y: float) -> tuple[float, float]:
        return self.ox + x * self.sx, self.oy + y * self.sy

    def pixel_to_world(self, px: float, py: float) -> tuple[float, float]:
        return (px - self.ox) / self.sx, (py - self.oy) / self.sy

    def project_object_box(self, obj: SimObject) -> Box:
        half = obj.size / 2.0
        x1, y1 = self.world_to_pixel(obj.position[0] - half, obj.position[1] - half)
        x2, y2 = self.world_to_pixel(obj.position[0] + half, obj.position[1] + half)
        return Box(x1, y1, x2, y2)


DEFAULT_CAMERA = Camera()


def _clamp_to_table(pos: tuple[float, float], bounds: tuple[float, float, float, float]) -> tuple[float, float]:
    return (min(max(pos[0], bounds[0]), bounds[2]),
            min(max(pos[1], bounds[1]), bounds[3]))


def step_physics(scene: SceneState, action: tuple[float, ...]) -> SceneState:
    """One kinematic step.

    action = (target_x, target_y, grip, rot): absolute gripper target in cm,
    grip >= 0.5 commands closed, rot is a discrete rotation-effect flag that
    has no kinematic consequence here (episode runners log it).
    """
    tx, ty, grip = action[0], action[1], action[2]
    gp = scene.gripper.position
    dx, dy = tx - gp[0], ty - gp[1]
    dist = math.hypot(dx, dy)
    if dist > MAX_STEP:
        scale = MAX_STEP / dist
        dx, dy = dx * scale, dy * scale
    new_pos = _clamp_to_table((gp[0] + dx, gp[1] + dy), scene.table_bounds)

    want_closed = grip >= 0.5
    was_open = scene.gripper.open
    held = scene.gripper.held_object
    stacked = dict(scene.stacked_on)

    objects = scene.objects
    if held is not None:
        objects = tuple(replace(o, position=new_pos) if o.id == held else o for o in objects)

    if want_closed and was_open:
        nearest = None
        nearest_d = GRASP_RADIUS
        for o in objects:
            d = math.hypot(o.position[0] - new_pos[0], o.position[1] - new_pos[1])
            if d <= nearest_d:
                nearest, nearest_d = o, d
        if nearest is not None:
            held = nearest.id
            stacked.pop(nearest.id, None)
            objects = tuple(replace(o, position=new_pos) if o.id == held else o for o in objects)
    elif not want_closed and not was_open:
        if held is not None:
            for o in objects:
                if o.id != held and math.hypot(o.position[0] - new_pos[0],
                                               o.position[1] - new_pos[1]) <= PLACE_TOL:
                    stacked[held] = o.id
                    break
        held = None

    gripper = Gripper(position=new_pos, open=not want_closed, held_object=held)
    return replace(scene, objects=objects, gripper=gripper,
                   stacked_on=tuple(sorted(stacked.items())))


def render_scene(scene: SceneState, camera: Camera = DEFAULT_CAMERA) -> RasterImage:
    """Rasterize the ego view: table, objects (largest first), gripper."""
    canvas = Canvas(RasterImage.filled(camera.frame.width, camera.frame.height, TABLE_RGB))

    for obj in sorted(scene.objects, key=lambda o: (-o.size, o.id)):
        color = COLOR_RGB.get(obj.color, (90, 90, 90))
        cx, cy = camera.world_to_pixel(*obj.position)
        half = obj.size / 2.0 * camera.sx
        if obj.shape in ("plate", "mug", "cup"):
            canvas.fill_disc(int(round(cx)), int(round(cy)), int(round(half)), color)
        else:
            canvas.fill_rect(int(round(cx - half)), int(round(cy - half)),
                             int(round(cx + half)), int(round(cy + half)), color)

    gx, gy = camera.world_to_pixel(*scene.gripper.position)
    gx, gy = int(round(gx)), int(round(gy))
    arm = 5
    canvas.line(gx - arm, gy, gx + arm, gy, GRIPPER_RGB, 1)
    canvas.line(gx, gy - arm, gx, gy + arm, GRIPPER_RGB, 1)
    if not scene.gripper.open:
        canvas.fill_rect(gx - 2, gy - 2, gx + 2, gy + 2, GRIPPER_RGB)
    return canvas.freeze()


def proprio_vector(scene: SceneState) -> tuple[float, float, float]:
    g = scene.gripper
    return (g.position[0], g.position[1], 1.0 if g.open else 0.0)
