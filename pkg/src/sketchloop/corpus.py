"""Auto-annotation corpus pipeline.

Episodes are segmented at gripper open/close transitions; each segment's
target object is the track with maximal centroid displacement; the segment
sketch is derived from the target's start box and its start/end centroids.
The output corpus carries one reasoning record per segment and one action
record per simulation step, mode-labeled for the balanced sampler.
"""

from __future__ import annotations

import hashlib
import json
import random
import warnings
from dataclasses import dataclass
from pathlib import Path

from sketchloop.augment import AugmentConfig, augment_sketch
from sketchloop.render import write_ppm
from sketchloop.sampling import CorpusIndex
from sketchloop.sim.episode import Episode
from sketchloop.sketch import (
    Box,
    ImageFrameMeta,
    Point,
    RotationArrow,
    TranslationArrow,
    VisualSketch,
    serialize_sketch,
)


@dataclass(frozen=True)
class ObjectTrack:
    """Per-timestep pixel centroids of one object over a whole episode."""

    object_id: str
    centroids: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "centroids", tuple(tuple(c) for c in self.centroids))


@dataclass(frozen=True)
class CorpusRecord:
    """One training sample: a mode label, a context snapshot, and a target."""

    record_id: str
    mode: str  # "reasoning" | "action"
    context: dict
    target: dict

    def to_json(self) -> str:
        return json.dumps({"id": self.record_id, "mode": self.mode,
                           "context": self.context, "target": self.target},
                          separators=(",", ":"))


def sketch_record_digest(record: str) -> str:
    return hashlib.blake2b(record.encode("utf-8"), digest_size=8).hexdigest()


def segment_subtasks(trace) -> list[tuple[int, int]]:
    """Half-open segments [start, end) split at every open/close transition.

    Segments tile [0, len(trace)) exactly; the timestep of a transition
    begins the new segment.
    """
    if len(trace) == 0:
        raise ValueError("gripper trace must be nonempty")
    boundaries = [t for t in range(1, len(trace)) if trace[t] != trace[t - 1]]
    starts = [0] + boundaries
    ends = boundaries + [len(trace)]
    return list(zip(starts, ends))


def select_target(tracks: list[ObjectTrack], segment: tuple[int, int]) -> str:
    """Id of the track moving farthest across the segment; ties pick the
    smallest id."""
    if not tracks:
        raise ValueError("no object tracks to select from")
    a, b = segment
    if b - a < 1:
        raise ValueError(f"empty segment {segment}")
    best_id = None
    best_d = -1.0
    for track in sorted(tracks, key=lambda tr: tr.object_id):
        if len(track.centroids) < b:
            raise ValueError(f"track {track.object_id} does not cover segment {segment}")
        x0, y0 = track.centroids[a]
        x1, y1 = track.centroids[b - 1]
        d = ((x1 - x0) ** 2 + (y1 - y0) ** 2) ** 0.5
        if d > best_d:
            best_id, best_d = track.object_id, d
    return best_id


def derive_sketch(segment: tuple[int, int], target_track: ObjectTrack,
                  target_box_at_start: Box, frame: ImageFrameMeta,
                  rotation_steps=()) -> VisualSketch:
    """Segment sketch: start box, start/goal centroids, one motion arrow.

    A rotation arrow is added only when the episode log marks a rotation
    effect inside the segment.
    """
    a, b = segment
    if b - 1 <= a:
        raise ValueError(f"degenerate segment {segment}: start frame equals end frame")
    sx, sy = target_track.centroids[a]
    ex, ey = target_track.centroids[b - 1]
    rot = tuple(RotationArrow(1, "x", "cw")
                for _ in range(1) if any(a <= t < b for t in rotation_steps))
    return VisualSketch(
        frame=frame,
        boxes=(target_box_at_start,),
        points=(Point(sx, sy, "start"), Point(ex, ey, "goal")),
        translation_arrows=(TranslationArrow(0, 1),),
        rotation_arrows=rot,
    )


def _clamped_box(cx: float, cy: float, half: float, frame: ImageFrameMeta) -> Box:
    return Box(max(0.0, cx - half), max(0.0, cy - half),
               min(float(frame.width), cx + half), min(float(frame.height), cy + half))


def _segment_subtask_text(ep: Episode, target_id: str, goal_px: tuple[float, float]) -> str:
    meta = ep.objects_meta.get(target_id, {})
    color = meta.get("color", "unknown")
    shape = meta.get("shape", "object")
    return f"move the {color} {shape} to ({goal_px[0]:.0f}, {goal_px[1]:.0f})"


def build_corpus(episodes, out_dir, augment_cfg: AugmentConfig | None = None,
                 frame: ImageFrameMeta | None = None) -> tuple[CorpusIndex, dict]:
    """Write corpus.jsonl, index.json, and a frames/ directory.

    Episodes are consumed lazily (they can be a generator). Within a
    segment every action record shares the same augmented sketch, so their
    sketch digests are identical by construction.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(exist_ok=True)
    rng = random.Random(augment_cfg.seed if augment_cfg else 0)

    reasoning_ids: list[str] = []
    action_ids: list[str] = []
    stats = {"episodes": 0, "skipped": 0, "reasoning_records": 0, "action_records": 0}

    with open(out_dir / "corpus.jsonl", "w", encoding="utf-8") as corpus_f:
        for ep in episodes:
            if ep.length == 0:
                warnings.warn(f"episode {ep.task_name}/{ep.seed} has no trace; skipped")
                stats["skipped"] += 1
                continue
            ep_frame = frame or ImageFrameMeta(240, 180, "ego")
            segments = segment_subtasks(ep.trace)
            tracks = [ObjectTrack(oid, tuple(ep.tracks[oid])) for oid in sorted(ep.tracks)]
            stats["episodes"] += 1
            ep_key = f"{ep.task_name}-s{ep.seed}"
            history: list[str] = []

            for k, (a, b) in enumerate(segments):
                if b - 1 <= a:
                    warnings.warn(f"{ep_key}: degenerate segment {k} at [{a},{b}); skipped")
                    continue
                target_id = select_target(tracks, (a, b))
                track = next(tr for tr in tracks if tr.object_id == target_id)
                cx, cy = track.centroids[a]
                half = ep.half_extents_px.get(target_id, 6.0)
                box = _clamped_box(cx, cy, half, ep_frame)
                sketch = derive_sketch((a, b), track, box, ep_frame, ep.rotation_steps)
                segment_sketch = (augment_sketch(sketch, augment_cfg, rng)
                                  if augment_cfg else sketch)
                sketch_line = serialize_sketch(sketch)
                segment_line = serialize_sketch(segment_sketch)
                segment_digest = sketch_record_digest(segment_line)

                frame_ref = None
                if a in ep.frames:
                    frame_ref = f"frames/{ep_key}-t{a:04d}.ppm"
                    write_ppm(ep.frames[a], out_dir / frame_ref)

                subtask = _segment_subtask_text(ep, target_id, track.centroids[b - 1])
                rid = f"{ep_key}-r{k:03d}"
                reasoning = CorpusRecord(
                    rid, "reasoning",
                    context={"instruction": ep.instruction, "history": list(history),
                             "frame": frame_ref},
                    target={"subtask": subtask,
                            "rationale": f"the {target_id.replace('_', ' ')} shows the largest "
                                         f"displacement in this segment; {subtask}",
                            "sketch": sketch_line},
                )
                corpus_f.write(reasoning.to_json() + "\n")
                reasoning_ids.append(rid)
                stats["reasoning_records"] += 1

                first_action = max(0, a - 1)
                for i in range(first_action, b - 1):
                    aid = f"{ep_key}-a{i:05d}"
                    action = CorpusRecord(
                        aid, "action",
                        context={"instruction": ep.instruction, "subtask": subtask,
                                 "segment": rid, "frame": frame_ref, "sketch": segment_line,
                                 "sketch_digest": segment_digest},
                        target={"action": list(ep.actions[i])},
                    )
                    corpus_f.write(action.to_json() + "\n")
                    action_ids.append(aid)
                    stats["action_records"] += 1
                history.append(subtask)

    index = CorpusIndex(tuple(reasoning_ids), tuple(action_ids))
    with open(out_dir / "index.json", "w", encoding="utf-8") as f:
        json.dump({"reasoning_ids": reasoning_ids, "action_ids": action_ids}, f)
        f.write("\n")
    return index, stats


def load_index(path) -> CorpusIndex:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return CorpusIndex(tuple(data["reasoning_ids"]), tuple(data["action_ids"]))


def read_corpus(path) -> list[CorpusRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(CorpusRecord(rec["id"], rec["mode"], rec["context"], rec["target"]))
    return out


def parse_pipeline_config(path) -> dict:
    """Plain key=value config: '#' comments, blank lines ignored."""
    cfg: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            cfg[key.strip()] = value.strip()
    return cfg
