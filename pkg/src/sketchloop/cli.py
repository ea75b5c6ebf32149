"""Command-line entry point.

Subcommands: run (episodes), dataset (corpus pipeline), augment, sample,
render, serve. Every seeded command is bit-reproducible; aggregate metrics
print as stable key=value lines. SKETCHLOOP_OUT overrides output paths.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from sketchloop.augment import AugmentConfig, augment_sketch
from sketchloop.corpus import build_corpus, load_index, parse_pipeline_config
from sketchloop.render import RasterImage, image_digest, read_ppm, write_ppm
from sketchloop.sampling import draw, write_manifest
from sketchloop.sim.episode import (
    Episode,
    ScriptedEvent,
    correcting_supervisor,
    episode_from_jsonl_lines,
    simulate_episode,
)
from sketchloop.sim.oracle import CorruptedSketchReasoner, NoisyPolicy, ReorderedReasoner, ScriptedPolicy
from sketchloop.sim.tasks import TASKS
from sketchloop.sketch import SketchError, parse_sketch, serialize_sketch

EXIT_OK = 0
EXIT_TASK_FAILED = 1
EXIT_FAULT = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


REASONERS = {
    "oracle": None,
    "corrupted": lambda w: CorruptedSketchReasoner(w),
    "reordered": lambda w: ReorderedReasoner(w),
}

POLICIES = {
    "scripted": None,
    "noisy": lambda w: NoisyPolicy(ScriptedPolicy(w.camera), bias_cm=3.0, seed=w.seed),
}

SUPERVISORS = {"none": None, "correcting": correcting_supervisor}


def _out_dir(arg: str | None, default: str) -> Path:
    base = os.environ.get("SKETCHLOOP_OUT")
    if arg:
        return Path(arg)
    if base:
        return Path(base) / default
    return Path(default)


def _load_events(path: str | None, scene_change_at: int | None) -> list[ScriptedEvent]:
    events = []
    if path:
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                events.append(ScriptedEvent(
                    at_step=rec["at_step"], kind=rec.get("kind", "scene_change"),
                    object_id=rec.get("object_id"), directive=rec.get("directive"),
                    deliver=rec.get("deliver", True)))
    if scene_change_at is not None:
        events.append(ScriptedEvent(at_step=scene_change_at))
    return events


def _rollout_worker(payload: dict) -> dict:
    task = payload["task"]
    seed = payload["seed"]
    events = [ScriptedEvent(**e) for e in payload["events"]]
    ep, outcome = simulate_episode(
        task, seed,
        reasoner=REASONERS[payload["reasoner"]],
        policy=POLICIES[payload["policy"]],
        scripted_events=events,
        hitl_gate=payload["hitl_gate"],
        supervisor=SUPERVISORS[payload["supervisor"]],
        budget=payload["budget"],
        record_frames=True,
    )
    rollout_dir = Path(payload["out"]) / f"rollout_{payload['index']:04d}"
    rollout_dir.mkdir(parents=True, exist_ok=True)
    with open(rollout_dir / "episode.jsonl", "w", encoding="utf-8") as f:
        for line in ep.to_jsonl_lines():
            f.write(line + "\n")
    if payload["frames"]:
        frames_dir = rollout_dir / "frames"
        frames_dir.mkdir(exist_ok=True)
        for t, frame in sorted(ep.frames.items()):
            write_ppm(frame, frames_dir / f"t{t:04d}.ppm")
    with open(rollout_dir / "outcome.json", "w", encoding="utf-8") as f:
        json.dump({"seed": seed, "success": outcome.success,
                   "failure_class": outcome.failure_class,
                   "subtasks_completed": outcome.subtasks_completed,
                   "subtasks_total": outcome.subtasks_total,
                   "steps": len(ep.actions), "fault": ep.fault}, f)
        f.write("\n")
    return {"index": payload["index"], "seed": seed, "success": outcome.success,
            "failure_class": outcome.failure_class, "fault": ep.fault,
            "subtasks_completed": outcome.subtasks_completed,
            "subtasks_total": outcome.subtasks_total, "steps": len(ep.actions)}


def cmd_run(args) -> int:
    if args.task not in TASKS:
        print(f"error: unknown task {args.task!r}; choose from {', '.join(sorted(TASKS))}",
              file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args.out, f"runs/{args.task}")
    out.mkdir(parents=True, exist_ok=True)
    events = _load_events(args.events, args.scene_change_at)
    payloads = [{
        "task": args.task, "seed": args.seed + i, "index": i,
        "events": [e.__dict__ for e in events],
        "reasoner": args.reasoner, "policy": args.policy,
        "hitl_gate": args.hitl_gate, "supervisor": args.supervisor,
        "budget": args.budget, "out": str(out), "frames": args.frames,
    } for i in range(args.rollouts)]

    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = sorted(pool.map(_rollout_worker, payloads), key=lambda r: r["index"])
    else:
        results = [_rollout_worker(p) for p in payloads]

    for r in results:
        line = (f"rollout={r['index']} seed={r['seed']} success={str(r['success']).lower()} "
                f"subtasks={r['subtasks_completed']}/{r['subtasks_total']} steps={r['steps']}")
        if r["failure_class"]:
            line += f" failure_class={r['failure_class']}"
        print(line)
    n = len(results)
    successes = sum(1 for r in results if r["success"])
    faults = sum(1 for r in results if r["fault"])
    print(f"success_rate={successes / n:.3f} rollouts={n} faults={faults}")

    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump({"task": args.task, "seeds": [r["seed"] for r in results],
                   "budget": args.budget, "outcomes": results,
                   "success_rate": successes / n}, f, indent=2)
        f.write("\n")

    if faults:
        return EXIT_FAULT
    return EXIT_OK if successes == n else EXIT_TASK_FAILED


def _iter_episode_dirs(root: Path):
    for ep_file in sorted(root.glob("**/episode.jsonl")):
        with open(ep_file, "r", encoding="utf-8") as f:
            ep = episode_from_jsonl_lines(f)
        frames_dir = ep_file.parent / "frames"
        if frames_dir.is_dir():
            for ppm in frames_dir.glob("t*.ppm"):
                ep.frames[int(ppm.stem[1:])] = read_ppm(ppm)
        yield ep


def _generate_episodes(task: str, seeds: range):
    for seed in seeds:
        ep, _ = simulate_episode(task, seed, record_frames=True)
        yield ep


def _parse_seed_range(spec: str) -> range:
    if ":" in spec:
        lo, hi = spec.split(":", 1)
        return range(int(lo), int(hi))
    return range(int(spec), int(spec) + 1)


def cmd_dataset(args) -> int:
    cfg = {}
    if args.config:
        cfg = parse_pipeline_config(args.config)
    task = args.task or cfg.get("task")
    episodes_dir = args.episodes or cfg.get("episodes_dir")
    if not task and not episodes_dir:
        print("error: need --task/--seeds or --episodes (or a config providing them)",
              file=sys.stderr)
        return EXIT_USAGE
    if task and task not in TASKS:
        print(f"error: unknown task {task!r}", file=sys.stderr)
        return EXIT_USAGE

    out = _out_dir(args.out or cfg.get("out_dir"), "corpus")
    augment_on = args.augment or cfg.get("augment", "false").lower() in ("1", "true", "yes")
    aug_cfg = None
    if augment_on:
        aug_cfg = AugmentConfig(
            iou_min=args.iou_min if args.iou_min is not None else float(cfg.get("iou_min", 0.8)),
            point_radius_c=(args.radius if args.radius is not None
                            else (float(cfg["point_radius_c"]) if "point_radius_c" in cfg else None)),
            max_rejection_iters=int(cfg.get("max_rejection_iters", 1000)),
            seed=args.seed if args.seed is not None else int(cfg.get("seed", 0)),
        )

    if episodes_dir:
        episodes = _iter_episode_dirs(Path(episodes_dir))
    else:
        seeds = _parse_seed_range(args.seeds or cfg.get("seeds", "0:10"))
        episodes = _generate_episodes(task, seeds)

    index, stats = build_corpus(episodes, out, aug_cfg)
    print(f"episodes={stats['episodes']} skipped={stats['skipped']} "
          f"reasoning_records={stats['reasoning_records']} "
          f"action_records={stats['action_records']}")
    print(f"corpus={out / 'corpus.jsonl'} index={out / 'index.json'}")
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = AugmentConfig(iou_min=args.iou_min if args.iou_min is not None else 0.8,
                        point_radius_c=args.radius, seed=args.seed or 0)
    rng = random.Random(cfg.seed)
    count = 0
    try:
        with open(args.records, "r", encoding="utf-8") as fin, \
                open(args.out, "w", encoding="utf-8") as fout:
            for line in fin:
                if not line.strip():
                    continue
                sketch = parse_sketch(line)
                fout.write(serialize_sketch(augment_sketch(sketch, cfg, rng)) + "\n")
                count += 1
    except (OSError, SketchError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_TASK_FAILED
    print(f"augmented_records={count} out={args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    try:
        index = load_index(args.index)
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_TASK_FAILED
    ids = draw(index, args.n, random.Random(args.seed))
    write_manifest(ids, args.out)
    reasoning = set(index.reasoning_ids)
    frac = sum(1 for i in ids if i in reasoning) / len(ids) if ids else 0.0
    print(f"manifest={args.out} draws={len(ids)} reasoning_fraction={frac:.4f}")
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        with open(args.record, "r", encoding="utf-8") as f:
            sketch = parse_sketch(f.read().strip())
        if args.frame:
            frame = read_ppm(args.frame)
        else:
            frame = RasterImage.filled(sketch.frame.width, sketch.frame.height, (0, 0, 0))
        from sketchloop.render import render_sketch
        out_img = render_sketch(frame, sketch)
        write_ppm(out_img, args.out)
    except (OSError, ValueError, SketchError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_TASK_FAILED
    print(f"out={args.out} digest={image_digest(out_img)}")
    if args.png:
        from PIL import Image
        Image.frombytes("RGB", (out_img.width, out_img.height), out_img.pixels).save(args.png)
        print(f"png={args.png}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from sketchloop.server import create_app

    app = create_app(step_delay=args.step_delay, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="sketchloop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run simulated episodes")
    run.add_argument("--task", required=True)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--rollouts", type=int, default=1)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--budget", type=int, default=900)
    run.add_argument("--events", help="jsonl file of scripted events")
    run.add_argument("--scene-change-at", type=int, default=None,
                     help="inject one scene_change at this physics step")
    run.add_argument("--reasoner", choices=sorted(REASONERS), default="oracle")
    run.add_argument("--policy", choices=sorted(POLICIES), default="scripted")
    run.add_argument("--hitl-gate", action="store_true")
    run.add_argument("--supervisor", choices=sorted(SUPERVISORS), default="none")
    run.add_argument("--frames", action="store_true", help="write recorded frames as PPM")
    run.add_argument("--out")
    run.set_defaults(func=cmd_run)

    ds = sub.add_parser("dataset", help="build the mode-labeled corpus")
    ds.add_argument("--task")
    ds.add_argument("--seeds", help="seed range lo:hi for generated episodes")
    ds.add_argument("--episodes", help="directory of episode logs to ingest")
    ds.add_argument("--config", help="key=value pipeline config file")
    ds.add_argument("--augment", action="store_true")
    ds.add_argument("--iou-min", type=float, default=None)
    ds.add_argument("--radius", type=float, default=None)
    ds.add_argument("--seed", type=int, default=None)
    ds.add_argument("--out")
    ds.set_defaults(func=cmd_dataset)

    aug = sub.add_parser("augment", help="augment sketch records")
    aug.add_argument("--records", required=True)
    aug.add_argument("--out", required=True)
    aug.add_argument("--iou-min", type=float, default=None)
    aug.add_argument("--radius", type=float, default=None)
    aug.add_argument("--seed", type=int, default=0)
    aug.set_defaults(func=cmd_augment)

    sm = sub.add_parser("sample", help="draw a mode-balanced manifest")
    sm.add_argument("--index", required=True)
    sm.add_argument("-n", type=int, required=True)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--out", required=True)
    sm.set_defaults(func=cmd_sample)

    rd = sub.add_parser("render", help="rasterize a sketch record")
    rd.add_argument("--record", required=True)
    rd.add_argument("--frame", help="PPM background (defaults to black at record size)")
    rd.add_argument("--out", required=True)
    rd.add_argument("--png", help="also export PNG")
    rd.set_defaults(func=cmd_render)

    sv = sub.add_parser("serve", help="run the live session service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8800)
    sv.add_argument("--step-delay", type=float, default=0.05)
    sv.add_argument("--frontend", help="static frontend directory to serve at /")
    sv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
