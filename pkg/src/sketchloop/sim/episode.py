"""Episode orchestration: drive the loop against the world and log everything.

The runner produces subtask_complete events when the canonical plan prefix
advances, applies scripted scene changes as teleports, and terminates on
success, fault, or step budget. Episode logs are byte-deterministic given
(task, seed, reasoner, policy, events): all timestamps are logical ticks.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

from sketchloop.loop import (
    BOR,
    EventKind,
    LoopEvent,
    LoopSession,
    LoopContext,
    NO_EVENT,
    token_trace,
    trace_matches_grammar,
)
from sketchloop.render import DEFAULT_STYLE, RasterImage, image_digest
from sketchloop.sim.oracle import OracleReasoner, ScriptedPolicy, oracle_sketch
from sketchloop.sim.tasks import TASKS, TaskSpec, World, generate_world, sample_free_position
from sketchloop.sim.world import DEFAULT_CAMERA, Gripper, SceneState, SimObject
from sketchloop.sketch import iou, parse_sketch, serialize_sketch

FAILURE_CLASSES = ("mode_switching", "temporal_reasoning", "spatial_sketch", "action_execution")

# Geometric deviation thresholds for the spatial-sketch failure class.
SPATIAL_IOU_MIN = 0.5
SPATIAL_POINT_TOL_PX = 25.0

DEFAULT_BUDGET = 900


@dataclass(frozen=True)
class ScriptedEvent:
    """Event injected when the physics step counter reaches at_step."""

    at_step: int
    kind: str = EventKind.SCENE_CHANGE.value
    object_id: str | None = None
    directive: str | None = None
    deliver: bool = True


@dataclass(frozen=True)
class EpisodeOutcome:
    success: bool
    failure_class: str | None
    subtasks_completed: int
    subtasks_total: int

    def __post_init__(self):
        if self.success and self.failure_class is not None:
            raise ValueError("successful outcomes carry no failure class")
        if not self.success and self.failure_class is None:
            raise ValueError("failed outcomes must carry a failure class")


@dataclass
class Episode:
    """Everything one rollout recorded. Index 0 of the per-state arrays is the
    initial state; index t > 0 is the state after action t-1."""

    task_name: str
    seed: int
    instruction: str
    budget: int
    actions: list[tuple[float, float, float, float]] = field(default_factory=list)
    trace: list[bool] = field(default_factory=list)
    tracks: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    half_extents_px: dict[str, float] = field(default_factory=dict)
    objects_meta: dict[str, dict] = field(default_factory=dict)
    boundaries_gt: list[int] = field(default_factory=list)
    rotation_steps: list[int] = field(default_factory=list)
    frames: dict[int, RasterImage] = field(default_factory=dict)
    reasoning_entries: list[dict] = field(default_factory=list)
    loop_log: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    fault: str | None = None
    success: bool | None = None
    outcome: EpisodeOutcome | None = None

    @property
    def length(self) -> int:
        return len(self.trace)

    def to_jsonl_lines(self) -> list[str]:
        lines = [json.dumps({"type": "meta", "task": self.task_name, "seed": self.seed,
                             "instruction": self.instruction, "budget": self.budget,
                             "fault": self.fault, "success": self.success,
                             "half_extents_px": self.half_extents_px,
                             "objects_meta": self.objects_meta},
                            separators=(",", ":"))]
        ids = sorted(self.tracks)
        for t in range(self.length):
            lines.append(json.dumps(
                {"type": "state", "t": t, "open": self.trace[t],
                 "centroids": {i: list(self.tracks[i][t]) for i in ids}},
                separators=(",", ":")))
        for t, a in enumerate(self.actions):
            lines.append(json.dumps({"type": "action", "t": t, "a": list(a)},
                                    separators=(",", ":")))
        lines.append(json.dumps({"type": "boundaries", "steps": self.boundaries_gt},
                                separators=(",", ":")))
        lines.append(json.dumps({"type": "rotations", "steps": self.rotation_steps},
                                separators=(",", ":")))
        for entry in self.reasoning_entries:
            lines.append(json.dumps({"type": "reasoning", **entry}, separators=(",", ":")))
        for entry in self.loop_log:
            lines.append(json.dumps({"type": "loop", **entry}, separators=(",", ":")))
        for entry in self.events:
            lines.append(json.dumps({"type": "event", **entry}, separators=(",", ":")))
        if self.outcome is not None:
            lines.append(json.dumps(
                {"type": "outcome", "success": self.outcome.success,
                 "failure_class": self.outcome.failure_class,
                 "subtasks_completed": self.outcome.subtasks_completed,
                 "subtasks_total": self.outcome.subtasks_total},
                separators=(",", ":")))
        return lines


def episode_from_jsonl_lines(lines) -> Episode:
    ep: Episode | None = None
    states: list[tuple[int, bool, dict]] = []
    for line in lines:
        if isinstance(line, str):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
        else:
            rec = line
        kind = rec.pop("type")
        if kind == "meta":
            ep = Episode(task_name=rec["task"], seed=rec["seed"], instruction=rec["instruction"],
                         budget=rec["budget"], fault=rec.get("fault"), success=rec.get("success"))
            ep.half_extents_px = dict(rec.get("half_extents_px", {}))
            ep.objects_meta = dict(rec.get("objects_meta", {}))
        elif kind == "state":
            states.append((rec["t"], rec["open"], rec["centroids"]))
        elif kind == "action":
            ep.actions.append(tuple(rec["a"]))
        elif kind == "boundaries":
            ep.boundaries_gt = list(rec["steps"])
        elif kind == "rotations":
            ep.rotation_steps = list(rec["steps"])
        elif kind == "reasoning":
            ep.reasoning_entries.append(rec)
        elif kind == "loop":
            ep.loop_log.append(rec)
        elif kind == "event":
            ep.events.append(rec)
        elif kind == "outcome":
            ep.outcome = EpisodeOutcome(rec["success"], rec.get("failure_class"),
                                        rec["subtasks_completed"], rec["subtasks_total"])
    if ep is None:
        raise ValueError("episode log has no meta line")
    states.sort(key=lambda s: s[0])
    for _, open_flag, centroids in states:
        ep.trace.append(open_flag)
        for obj_id, c in centroids.items():
            ep.tracks.setdefault(obj_id, []).append((c[0], c[1]))
    return ep


def scene_snapshot(scene: SceneState) -> dict:
    return {
        "objects": [{"id": o.id, "shape": o.shape, "x": o.position[0], "y": o.position[1],
                     "size": o.size, "color": o.color} for o in scene.objects],
        "gripper": {"x": scene.gripper.position[0], "y": scene.gripper.position[1],
                    "open": scene.gripper.open, "held": scene.gripper.held_object},
    }


def scene_from_snapshot(snapshot: dict) -> SceneState:
    objects = tuple(SimObject(o["id"], o["shape"], (o["x"], o["y"]), o["size"], o["color"])
                    for o in snapshot["objects"])
    g = snapshot["gripper"]
    gripper = Gripper((g["x"], g["y"]), g["open"], g.get("held"))
    return SceneState(objects, gripper)


def _resolve(impl_or_factory, default_factory, world):
    if impl_or_factory is None:
        return default_factory(world)
    if hasattr(impl_or_factory, "reason") or hasattr(impl_or_factory, "act"):
        return impl_or_factory
    return impl_or_factory(world)


def _pick_teleport_target(world: World, explicit: str | None) -> str | None:
    if explicit is not None:
        return explicit
    scene = world.scene
    task = world.task
    held = scene.gripper.held_object
    for step in task.steps:
        if not step.satisfied(scene) and step.mover_id != held:
            return step.mover_id
    return None


def _apply_scene_change(world: World, event: ScriptedEvent) -> dict:
    target = _pick_teleport_target(world, event.object_id)
    detail = {"kind": event.kind, "object_id": target, "delivered": event.deliver}
    if target is None:
        return detail
    scene = world.scene
    others = [o.position for o in scene.objects if o.id != target]
    goals = tuple(step.goal_point(scene) for step in world.task.steps)
    pos = sample_free_position(world.event_rng, others, scene.table_bounds,
                               min_sep=6.0, avoid=goals, avoid_radius=5.0)
    world.teleport(target, pos)
    detail["new_pos"] = [pos[0], pos[1]]
    return detail


def correcting_supervisor(session: LoopSession, world: World) -> None:
    """Scripted HITL reviewer: replace the proposal with the exact oracle sketch."""
    idx = world.task.first_unsatisfied(world.scene)
    if idx is None:
        return
    sketch = oracle_sketch(world.scene, world.camera, world.task.steps[idx])
    session.apply_intervention(sketch, editor="scripted_supervisor")


def simulate_episode(task: TaskSpec | str, world_seed: int, reasoner=None, policy=None,
                     scripted_events=(), *, hitl_gate: bool = False, supervisor=None,
                     budget: int = DEFAULT_BUDGET, record_frames: bool = True,
                     drop_completion_events: bool = False,
                     style=DEFAULT_STYLE) -> tuple[Episode, EpisodeOutcome]:
    """Run one rollout to termination (success, fault, or budget).

    `reasoner` and `policy` may be instances or factories taking the world;
    by default the ground-truth oracle drives the scripted policy.
    `drop_completion_events` simulates a broken mode gate: subtask boundaries
    are logged but never trigger reasoning, so execution continues on a
    stale sketch.
    """
    if isinstance(task, str):
        task = TASKS[task]
    world = generate_world(task.name, world_seed)
    reasoner = _resolve(reasoner, OracleReasoner, world)
    policy = _resolve(policy, lambda w: ScriptedPolicy(w.camera), world)

    context = LoopContext(instruction=task.instruction,
                          observations={"ego": world.render()},
                          proprio_state=world.proprio())
    session = LoopSession(reasoner, policy, context, hitl_gate=hitl_gate, style=style)

    ep = Episode(task.name, world_seed, task.instruction, budget)
    ep.loop_log = session.log
    for o in world.scene.objects:
        ep.tracks[o.id] = []
        ep.half_extents_px[o.id] = o.size / 2.0 * world.camera.sx
        ep.objects_meta[o.id] = {"shape": o.shape, "color": o.color, "size": o.size}

    def record_state():
        ep.trace.append(world.scene.gripper.open)
        for o in world.scene.objects:
            ep.tracks[o.id].append(world.camera.world_to_pixel(*o.position))

    record_state()
    if record_frames:
        ep.frames[0] = world.render()

    pending: deque[LoopEvent] = deque()
    script = deque(sorted(scripted_events, key=lambda e: e.at_step))
    t = 0
    success = False
    last_prefix = task.first_unsatisfied(world.scene)
    last_prefix = len(task.steps) if last_prefix is None else last_prefix

    while True:
        if task.success(world.scene):
            success = True
            break
        if t >= budget or session.state.value == "faulted":
            break

        event: LoopEvent | None = None
        if pending:
            event = pending.popleft()
        elif script and script[0].at_step <= t:
            scripted = script.popleft()
            if scripted.kind == EventKind.SCENE_CHANGE.value:
                detail = _apply_scene_change(world, scripted)
            else:
                detail = {"kind": scripted.kind, "object_id": scripted.object_id,
                          "delivered": scripted.deliver}
            detail.update({"tick": session.tick + 1, "t": t})
            ep.events.append(detail)
            if scripted.deliver:
                kind = EventKind(scripted.kind)
                if kind == EventKind.HUMAN_INTERVENTION:
                    event = LoopEvent(kind, directive=scripted.directive or "operator request")
                elif kind == EventKind.ERROR_DETECTED:
                    event = LoopEvent(kind, diagnostics=scripted.directive or "scripted fault probe")
                else:
                    event = LoopEvent(kind)
            else:
                continue

        if session.state.value == "boot" or event is not None:
            snapshot = scene_snapshot(world.scene)
            obs = world.render()
            session.update_observation("ego", obs, world.proprio())
            result = session.step(event or NO_EVENT)
            if result.record is not None:
                ep.reasoning_entries.append({
                    "tick": session.tick, "t": t,
                    "event": (event.kind.value if event else "none"),
                    "subtask": result.record.subtask,
                    "rationale": result.record.rationale_text,
                    "sketch_record": serialize_sketch(result.record.sketch),
                    "sketch_digest": image_digest(session.context.current_sketch_image),
                    "scene": snapshot,
                })
                if record_frames:
                    ep.frames[t] = obs
            if result.fault is not None:
                ep.fault = result.fault
                break
            if session.state.value == "awaiting_approval":
                if supervisor is not None:
                    supervisor(session, world)
                if session.state.value == "awaiting_approval":
                    session.approve()
            continue

        # Executing, no event: one action chunk.
        result = session.step(NO_EVENT)
        if result.fault is not None:
            ep.fault = result.fault
            break
        for a in result.chunk.actions:
            if t >= budget:
                break
            was_open = world.scene.gripper.open
            world.apply(a)
            t += 1
            ep.actions.append((float(a[0]), float(a[1]), float(a[2]), float(a[3])))
            record_state()
            if len(a) > 3 and a[3] != 0.0:
                ep.rotation_steps.append(t)
            if world.scene.gripper.open != was_open:
                ep.boundaries_gt.append(t)
                if record_frames:
                    ep.frames[t] = world.render()
        session.update_proprio(world.proprio())
        prefix = task.first_unsatisfied(world.scene)
        prefix = len(task.steps) if prefix is None else prefix
        if prefix > last_prefix:
            last_prefix = prefix
            if drop_completion_events:
                ep.events.append({"kind": EventKind.SUBTASK_COMPLETE.value, "object_id": None,
                                  "delivered": False, "tick": session.tick + 1, "t": t})
            else:
                pending.append(LoopEvent(EventKind.SUBTASK_COMPLETE))

    ep.success = success
    failure_class = None if success else classify_failure(ep, task)
    outcome = EpisodeOutcome(success, failure_class,
                             task.satisfied_count(world.scene), len(task.steps))
    ep.outcome = outcome
    return ep, outcome


def _sketch_deviates(logged, reference) -> bool:
    if len(logged.boxes) != len(reference.boxes) or not logged.boxes:
        return True
    for lb, rb in zip(logged.boxes, reference.boxes):
        if iou(lb, rb) < SPATIAL_IOU_MIN:
            return True
    for label in ("grasp", "goal"):
        lp = logged.point_by_label(label)
        rp = reference.point_by_label(label)
        if (lp is None) != (rp is None):
            return True
        if lp is not None and ((lp.x - rp.x) ** 2 + (lp.y - rp.y) ** 2) ** 0.5 > SPATIAL_POINT_TOL_PX:
            return True
    return False


def classify_failure(episode: Episode, task: TaskSpec) -> str:
    """Assign one of the four failure classes to a failed episode.

    Checked in order: token grammar and event gating (mode_switching),
    canonical subtask order (temporal_reasoning), sketch-to-oracle geometric
    deviation (spatial_sketch), and action_execution as the remainder.
    """
    if episode.success:
        raise ValueError("classify_failure is only defined for failed episodes")

    tokens = [tok for tok, _ in token_trace(episode.loop_log)]
    if not trace_matches_grammar(tokens):
        return "mode_switching"
    token_entries = [(e["t"], e["token"]) for e in episode.loop_log if "token" in e]

    def first_token_at_or_after(tick):
        for tk, tok in token_entries:
            if tk >= tick:
                return tok
        return None

    for ev in episode.events:
        if ev["kind"] == EventKind.NONE.value:
            continue
        if first_token_at_or_after(ev["tick"]) != BOR:
            return "mode_switching"
    for entry in episode.loop_log:
        if "event" in entry and entry["event"] != EventKind.NONE.value:
            if first_token_at_or_after(entry["t"]) != BOR:
                return "mode_switching"

    sequence: list[str] = []
    for entry in episode.reasoning_entries:
        if not sequence or sequence[-1] != entry["subtask"]:
            sequence.append(entry["subtask"])
    indices = []
    for text in sequence:
        step = task.step_by_text(text)
        if step is None:
            return "temporal_reasoning"
        indices.append(task.steps.index(step))
    if not indices or indices[0] != 0:
        return "temporal_reasoning"
    for a, b in zip(indices, indices[1:]):
        if b not in (a, a + 1):
            return "temporal_reasoning"

    for entry in episode.reasoning_entries:
        step = task.step_by_text(entry["subtask"])
        scene = scene_from_snapshot(entry["scene"])
        reference = oracle_sketch(scene, DEFAULT_CAMERA, step)
        logged = parse_sketch(entry["sketch_record"])
        if _sketch_deviates(logged, reference):
            return "spatial_sketch"

    return "action_execution"
