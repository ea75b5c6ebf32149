"""Task catalog: scripted tabletop tasks with canonical decompositions.

Every task decomposes into pick-and-place steps. A step is satisfied when
its mover rests within tolerance of its goal point and is not held; the
task's success predicate is the conjunction over all steps, decidable on
any scene.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from sketchloop.sim.world import (
    DEFAULT_CAMERA,
    PLACE_TOL,
    SHAPE_SIZES,
    Camera,
    Gripper,
    SceneState,
    SimObject,
    proprio_vector,
    render_scene,
)

# Scene sampling margins (cm).
EDGE_MARGIN = 8.0
MIN_SEPARATION = 9.0
GRIPPER_HOME = (30.0, 41.0)


@dataclass(frozen=True)
class PlanStep:
    """One canonical subtask: move `mover_id` to a scene-dependent goal."""

    mover_id: str
    goal_kind: str  # "on" | "beside" | "zone"
    goal_ref: str | None
    goal_offset: tuple[float, float]
    text: str
    kind: str = "place"  # "place" | "pour"

    def goal_point(self, scene: SceneState) -> tuple[float, float]:
        if self.goal_kind == "zone":
            return self.goal_offset
        base = scene.object_by_id(self.goal_ref)
        return (base.position[0] + self.goal_offset[0],
                base.position[1] + self.goal_offset[1])

    def satisfied(self, scene: SceneState, tol: float = PLACE_TOL) -> bool:
        if scene.gripper.held_object == self.mover_id:
            return False
        mover = scene.object_by_id(self.mover_id)
        gx, gy = self.goal_point(scene)
        return math.hypot(mover.position[0] - gx, mover.position[1] - gy) <= tol


@dataclass(frozen=True)
class TaskSpec:
    name: str
    instruction: str
    steps: tuple[PlanStep, ...]
    subtask_count_range: tuple[int, int]

    def success(self, scene: SceneState) -> bool:
        return all(step.satisfied(scene) for step in self.steps)

    def first_unsatisfied(self, scene: SceneState) -> int | None:
        for i, step in enumerate(self.steps):
            if not step.satisfied(scene):
                return i
        return None

    def satisfied_count(self, scene: SceneState) -> int:
        return sum(1 for step in self.steps if step.satisfied(scene))

    def step_by_text(self, text: str) -> PlanStep | None:
        for step in self.steps:
            if step.text == text:
                return step
        return None


def _obj(object_id: str, shape: str, color: str) -> SimObject:
    return SimObject(object_id, shape, (0.0, 0.0), SHAPE_SIZES[shape], color)


def _task_blueprint(name: str):
    """Objects and plan steps for a catalog task (positions filled in later)."""
    if name == "stack_blocks":
        objects = [_obj("green_block", "block", "green"), _obj("red_block", "block", "red"),
                   _obj("blue_block", "block", "blue"), _obj("yellow_block", "block", "yellow")]
        steps = (
            PlanStep("red_block", "on", "green_block", (0.0, 0.0),
                     "place the red block on the green block"),
            PlanStep("blue_block", "on", "red_block", (0.0, 0.0),
                     "place the blue block on the red block"),
            PlanStep("yellow_block", "on", "blue_block", (0.0, 0.0),
                     "place the yellow block on the blue block"),
        )
        return objects, steps, "stack the red, blue and yellow blocks on the green block"
    if name in ("place_a2b_left", "place_a2b_right"):
        objects = [_obj("white_plate", "plate", "white"), _obj("purple_mug", "mug", "purple"),
                   _obj("red_block", "block", "red")]
        gap = SHAPE_SIZES["plate"] / 2 + SHAPE_SIZES["mug"] / 2 + 2.0
        side = "left" if name.endswith("left") else "right"
        dx = -gap if side == "left" else gap
        steps = (PlanStep("purple_mug", "beside", "white_plate", (dx, 0.0),
                          f"place the purple mug to the {side} of the white plate"),)
        return objects, steps, f"place the mug to the {side} of the plate"
    if name == "tidy_table":
        objects = [_obj("white_plate", "plate", "white"), _obj("red_block", "block", "red"),
                   _obj("cyan_cup", "cup", "cyan"), _obj("yellow_mug", "mug", "yellow")]
        offsets = ((-2.2, 0.0), (2.2, 0.0), (0.0, 2.2))
        movers = ("red_block", "cyan_cup", "yellow_mug")
        labels = ("red block", "cyan cup", "yellow mug")
        steps = tuple(
            PlanStep(m, "on", "white_plate", off, f"place the {label} on the white plate")
            for m, off, label in zip(movers, offsets, labels))
        return objects, steps, "tidy the table: put everything on the white plate"
    raise KeyError(f"unknown task {name!r}")


TASK_NAMES = ("stack_blocks", "place_a2b_left", "place_a2b_right", "tidy_table")


def task_catalog() -> dict[str, TaskSpec]:
    out = {}
    for name in TASK_NAMES:
        objects, steps, instruction = _task_blueprint(name)
        out[name] = TaskSpec(name, instruction, steps, (len(steps), len(steps)))
    return out


TASKS = task_catalog()


class World:
    """Owns the live scene, the camera, the bound task, and the event RNG."""

    def __init__(self, task: TaskSpec, scene: SceneState, camera: Camera, seed: int):
        self.task = task
        self.scene = scene
        self.camera = camera
        self.seed = seed
        self.event_rng = random.Random(seed ^ 0x5EED5EED)

    def apply(self, action: tuple[float, ...]) -> SceneState:
        from sketchloop.sim.world import step_physics
        self.scene = step_physics(self.scene, action)
        return self.scene

    def render(self):
        return render_scene(self.scene, self.camera)

    def proprio(self) -> tuple[float, float, float]:
        return proprio_vector(self.scene)

    def teleport(self, object_id: str, position: tuple[float, float]):
        self.scene = self.scene.with_object_position(object_id, position)


def _far_enough(pos, others, min_sep):
    return all(math.hypot(pos[0] - o[0], pos[1] - o[1]) >= min_sep for o in others)


def sample_free_position(rng: random.Random, scene_positions, bounds,
                         min_sep: float = MIN_SEPARATION,
                         avoid: tuple[tuple[float, float], ...] = (),
                         avoid_radius: float = 5.0) -> tuple[float, float]:
    """Seeded rejection sampling with a relaxing separation so it always lands."""
    x0, y0, x1, y1 = bounds
    sep = min_sep
    while True:
        for _ in range(200):
            pos = (rng.uniform(x0 + EDGE_MARGIN, x1 - EDGE_MARGIN),
                   rng.uniform(y0 + EDGE_MARGIN, y1 - EDGE_MARGIN))
            if _far_enough(pos, scene_positions, sep) and _far_enough(pos, avoid, avoid_radius):
                return pos
        sep *= 0.8


def generate_world(task_name: str, seed: int) -> World:
    """Deterministic scene for (task, seed); goal zones are kept on-table."""
    task = TASKS[task_name]
    objects, _, _ = _task_blueprint(task_name)
    rng = random.Random(seed)
    bounds = (0.0, 0.0, 60.0, 45.0)

    for attempt in range(200):
        placed: list[SimObject] = []
        positions: list[tuple[float, float]] = []
        for obj in objects:
            pos = sample_free_position(rng, positions, bounds)
            placed.append(SimObject(obj.id, obj.shape, pos, obj.size, obj.color))
            positions.append(pos)
        scene = SceneState(tuple(placed), Gripper(GRIPPER_HOME, open=True))
        if _goals_feasible(task, scene, bounds):
            return World(task, scene, DEFAULT_CAMERA, seed)
    raise RuntimeError(f"could not generate a feasible scene for {task_name} seed {seed}")


def _goals_feasible(task: TaskSpec, scene: SceneState, bounds) -> bool:
    x0, y0, x1, y1 = bounds
    for step in task.steps:
        gx, gy = step.goal_point(scene)
        if not (x0 + 2.0 <= gx <= x1 - 2.0 and y0 + 2.0 <= gy <= y1 - 2.0):
            return False
        # a goal sitting on an uninvolved object's grasp zone invites mispicks
        for obj in scene.objects:
            if obj.id in (step.mover_id, step.goal_ref):
                continue
            if math.hypot(obj.position[0] - gx, obj.position[1] - gy) < 4.0:
                return False
    return True
