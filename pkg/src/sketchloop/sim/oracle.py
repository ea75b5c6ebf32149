"""Ground-truth reasoner and scripted action policy for the tabletop world.

The oracle reads the live scene and produces the canonical next subtask with
an exact sketch (target box, grasp point, goal point, arrow). The scripted
policy deliberately sees only the sketch and proprioception, never the task:
the sketch is the sole spatial channel between reasoning and acting.
"""

from __future__ import annotations

import math
import random

from sketchloop.loop import ActionChunk, LoopContext, ReasoningRecord
from sketchloop.sim.tasks import PlanStep, TaskSpec, World
from sketchloop.sim.world import MAX_STEP, Camera, SceneState
from sketchloop.sketch import Point, RotationArrow, TranslationArrow, VisualSketch

ARRIVE_TOL = 0.35  # cm: close enough to toggle the gripper
DEFAULT_HORIZON = 8


class NoSubtaskRemains(Exception):
    """The task's canonical decomposition is fully satisfied."""


class PolicyError(Exception):
    """The sketch does not carry the points the policy needs."""


def oracle_sketch(scene: SceneState, camera: Camera, step: PlanStep) -> VisualSketch:
    """Exact sketch for one plan step, projected through the camera."""
    target = scene.object_by_id(step.mover_id)
    box = camera.project_object_box(target)
    gx, gy = camera.world_to_pixel(*target.position)
    wx, wy = step.goal_point(scene)
    tx, ty = camera.world_to_pixel(wx, wy)
    points = (Point(gx, gy, "grasp"), Point(tx, ty, "goal"))
    rot = (RotationArrow(1, "x", "cw"),) if step.kind == "pour" else ()
    return VisualSketch(camera.frame, boxes=(box,), points=points,
                        translation_arrows=(TranslationArrow(0, 1),),
                        rotation_arrows=rot)


def oracle_reason(scene: SceneState, task: TaskSpec, history: tuple[str, ...],
                  camera: Camera) -> ReasoningRecord:
    """Next canonical subtask with its exact sketch; errors when none remains."""
    idx = task.first_unsatisfied(scene)
    if idx is None:
        raise NoSubtaskRemains("no subtask remains")
    step = task.steps[idx]
    sketch = oracle_sketch(scene, camera, step)
    target = scene.object_by_id(step.mover_id)
    grasp = sketch.points[0]
    goal = sketch.points[1]
    rationale = (
        f"{len(history)} of {len(task.steps)} steps are done; the next step is: {step.text}. "
        f"The {target.color} {target.shape} sits at pixel ({grasp.x:.0f}, {grasp.y:.0f}); "
        f"it belongs at ({goal.x:.0f}, {goal.y:.0f}), so grasp it and carry it there.")
    return ReasoningRecord(rationale, step.text, sketch)


class OracleReasoner:
    """Reasoner bound to a live world; always correct."""

    def __init__(self, world: World):
        self.world = world

    def reason(self, context: LoopContext) -> ReasoningRecord:
        return oracle_reason(self.world.scene, self.world.task,
                             context.completed_subtasks, self.world.camera)


class CorruptedSketchReasoner:
    """Oracle with the goal point displaced: right subtask, wrong geometry."""

    def __init__(self, world: World, goal_offset_px: tuple[float, float] = (50.0, 0.0)):
        self.world = world
        self.offset = goal_offset_px

    def reason(self, context: LoopContext) -> ReasoningRecord:
        record = oracle_reason(self.world.scene, self.world.task,
                               context.completed_subtasks, self.world.camera)
        frame = record.sketch.frame
        points = []
        for p in record.sketch.points:
            if p.label == "goal":
                x = min(max(p.x + self.offset[0], 0.0), float(frame.width))
                y = min(max(p.y + self.offset[1], 0.0), float(frame.height))
                points.append(Point(x, y, p.label))
            else:
                points.append(p)
        sketch = VisualSketch(frame, record.sketch.boxes, tuple(points),
                              record.sketch.translation_arrows, record.sketch.rotation_arrows)
        return ReasoningRecord(record.rationale_text, record.subtask, sketch)


class ReorderedReasoner:
    """Serves the LAST unsatisfied step first: correct geometry, wrong order."""

    def __init__(self, world: World):
        self.world = world

    def reason(self, context: LoopContext) -> ReasoningRecord:
        scene = self.world.scene
        task = self.world.task
        pending = [s for s in task.steps if not s.satisfied(scene)]
        if not pending:
            raise NoSubtaskRemains("no subtask remains")
        step = pending[-1]
        sketch = oracle_sketch(scene, self.world.camera, step)
        return ReasoningRecord(f"next: {step.text}", step.text, sketch)


def _active_point(sketch: VisualSketch, holding: bool) -> tuple[float, float]:
    grasp = sketch.point_by_label("grasp") or sketch.point_by_label("start")
    goal = sketch.point_by_label("goal")
    if grasp is None and sketch.points:
        grasp = sketch.points[0]
    if goal is None and len(sketch.points) > 1:
        goal = sketch.points[-1]
    p = goal if holding else grasp
    if p is None:
        raise PolicyError("uninterpretable sketch: no usable grasp/goal point")
    return p.x, p.y


class ScriptedPolicy:
    """Straight-line motion toward the sketch's active point.

    Open gripper: head to the grasp point and close on arrival. Closed:
    head to the goal point and open on arrival (emitting a rotation effect
    first if the sketch asks for one). The chunk is planned open-loop with
    the same clamped kinematics the world applies.
    """

    def __init__(self, camera: Camera, horizon: int = DEFAULT_HORIZON):
        self.camera = camera
        self.horizon = horizon

    def act(self, context: LoopContext) -> ActionChunk:
        sketch = context.current_sketch
        if sketch is None or not sketch.points:
            raise PolicyError("uninterpretable sketch: no points to act on")
        px, py, open_flag = context.proprio_state
        holding = open_flag < 0.5
        ax, ay = _active_point(sketch, holding)
        wx, wy = self.camera.pixel_to_world(ax, ay)
        grip = 1.0 if holding else 0.0
        wants_rotation = bool(sketch.rotation_arrows) and holding

        actions: list[tuple[float, float, float, float]] = []
        x, y = px, py
        toggled = False
        rotated = False
        for _ in range(self.horizon):
            if toggled:
                # hold position and the post-toggle grip state
                actions.append((x, y, 0.0 if holding else 1.0, 0.0))
                continue
            dx, dy = wx - x, wy - y
            dist = math.hypot(dx, dy)
            if dist <= ARRIVE_TOL:
                if wants_rotation and not rotated:
                    direction = 1.0 if sketch.rotation_arrows[0].direction == "cw" else -1.0
                    actions.append((x, y, grip, direction))
                    rotated = True
                    continue
                # arrived: toggle the gripper (close to grasp, open to release)
                actions.append((x, y, 0.0 if holding else 1.0, 0.0))
                toggled = True
                continue
            scale = min(1.0, MAX_STEP / dist)
            x, y = x + dx * scale, y + dy * scale
            actions.append((wx, wy, grip, 0.0))
        return ActionChunk(tuple(actions))


class NoisyPolicy:
    """Wraps a policy with a fixed seeded positional bias: honest sketches,
    sloppy execution."""

    def __init__(self, base: ScriptedPolicy, bias_cm: float = 3.0, seed: int = 0):
        self.base = base
        rng = random.Random(seed)
        angle = rng.uniform(0, 2 * math.pi)
        self.bias = (bias_cm * math.cos(angle), bias_cm * math.sin(angle))

    def act(self, context: LoopContext) -> ActionChunk:
        chunk = self.base.act(context)
        shifted = tuple((a[0] + self.bias[0], a[1] + self.bias[1], a[2], a[3])
                        for a in chunk.actions)
        return ActionChunk(shifted)
