"""Deterministic tabletop testbed: world, tasks, oracles, episode runner."""

from sketchloop.sim.episode import (
    Episode,
    EpisodeOutcome,
    FAILURE_CLASSES,
    ScriptedEvent,
    classify_failure,
    correcting_supervisor,
    episode_from_jsonl_lines,
    simulate_episode,
)
from sketchloop.sim.oracle import (
    CorruptedSketchReasoner,
    NoSubtaskRemains,
    NoisyPolicy,
    OracleReasoner,
    PolicyError,
    ReorderedReasoner,
    ScriptedPolicy,
    oracle_reason,
    oracle_sketch,
)
from sketchloop.sim.tasks import TASKS, TaskSpec, World, generate_world
from sketchloop.sim.world import (
    Camera,
    DEFAULT_CAMERA,
    Gripper,
    SceneState,
    SimObject,
    render_scene,
    step_physics,
)

__all__ = [
    "Camera",
    "CorruptedSketchReasoner",
    "DEFAULT_CAMERA",
    "Episode",
    "EpisodeOutcome",
    "FAILURE_CLASSES",
    "Gripper",
    "NoSubtaskRemains",
    "NoisyPolicy",
    "OracleReasoner",
    "PolicyError",
    "ReorderedReasoner",
    "SceneState",
    "ScriptedEvent",
    "ScriptedPolicy",
    "SimObject",
    "TASKS",
    "TaskSpec",
    "World",
    "classify_failure",
    "correcting_supervisor",
    "episode_from_jsonl_lines",
    "generate_world",
    "oracle_reason",
    "oracle_sketch",
    "render_scene",
    "simulate_episode",
    "step_physics",
]
