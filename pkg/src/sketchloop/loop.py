"""Token-gated see/think/sketch/act control loop.

The loop alternates between a reasoning phase (emit BOR, produce the next
subtask plus its sketch, emit EOR, re-render the sketch image) and an action
phase (emit BOA, produce an action chunk). Reasoning is triggered at boot and
by events: subtask completion, detected errors, human intervention, scene
changes. Event production is the caller's job; the loop only consumes.

Token traces of healthy episodes match the grammar (BOR EOR BOA*)+.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Protocol

from sketchloop.render import DEFAULT_STYLE, RasterImage, SketchStyle, image_digest, render_sketch
from sketchloop.sketch import VisualSketch, validate_sketch

BOR = "BOR"
EOR = "EOR"
BOA = "BOA"


class LoopState(str, Enum):
    BOOT = "boot"
    DELIBERATING = "deliberating"
    AWAITING_APPROVAL = "awaiting_approval"
    EXECUTING = "executing"
    FAULTED = "faulted"


class EventKind(str, Enum):
    SUBTASK_COMPLETE = "subtask_complete"
    ERROR_DETECTED = "error_detected"
    HUMAN_INTERVENTION = "human_intervention"
    SCENE_CHANGE = "scene_change"
    NONE = "none"


REASONING_TRIGGERS = (
    EventKind.SUBTASK_COMPLETE,
    EventKind.ERROR_DETECTED,
    EventKind.HUMAN_INTERVENTION,
    EventKind.SCENE_CHANGE,
)


class LoopError(Exception):
    """Illegal use of the loop (bad state for the requested transition)."""


class InterventionRejected(LoopError):
    """Sketch edit refused; carries the reason (validation report or state)."""


@dataclass(frozen=True)
class LoopEvent:
    kind: EventKind = EventKind.NONE
    sketch: VisualSketch | None = None
    directive: str | None = None
    diagnostics: str | None = None

    def __post_init__(self):
        if self.kind == EventKind.HUMAN_INTERVENTION and self.sketch is None and not self.directive:
            raise ValueError("human_intervention events carry a sketch or a text directive")


NO_EVENT = LoopEvent(EventKind.NONE)


@dataclass(frozen=True)
class ReasoningRecord:
    """Output of one deliberation: rationale, the next subtask, its sketch."""

    rationale_text: str
    subtask: str
    sketch: VisualSketch

    def __post_init__(self):
        if not self.subtask:
            raise ValueError("subtask must be nonempty")


@dataclass(frozen=True)
class ActionChunk:
    """Fixed-horizon sequence of action vectors."""

    actions: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(tuple(a) for a in self.actions))
        if len(self.actions) < 1:
            raise ValueError("chunk horizon must be >= 1")
        dims = {len(a) for a in self.actions}
        if len(dims) != 1:
            raise ValueError(f"inconsistent action dimensionality: {sorted(dims)}")

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def digest(self) -> str:
        payload = json.dumps(self.actions, separators=(",", ":")).encode("ascii")
        return hashlib.blake2b(payload, digest_size=8).hexdigest()


@dataclass(frozen=True)
class LoopContext:
    """Working memory of the loop: instruction, views, history, active sketch."""

    instruction: str
    observations: dict[str, RasterImage] = field(default_factory=dict)
    completed_subtasks: tuple[str, ...] = ()
    current_subtask: str | None = None
    current_sketch: VisualSketch | None = None
    current_sketch_image: RasterImage | None = None
    proprio_state: tuple[float, ...] = ()
    reference_view: str = "ego"

    def __post_init__(self):
        object.__setattr__(self, "completed_subtasks", tuple(self.completed_subtasks))
        object.__setattr__(self, "proprio_state", tuple(self.proprio_state))
        if (self.current_sketch is None) != (self.current_sketch_image is None):
            raise ValueError("current_sketch and current_sketch_image must be set together")
        ref = self.observations.get(self.reference_view)
        if self.current_sketch_image is not None and ref is not None:
            if (self.current_sketch_image.width, self.current_sketch_image.height) != (ref.width, ref.height):
                raise ValueError("sketch image dims must match the reference view")

    def reference_frame(self) -> RasterImage:
        try:
            return self.observations[self.reference_view]
        except KeyError:
            raise LoopError(f"context has no observation for view {self.reference_view!r}")


class Reasoner(Protocol):
    def reason(self, context: LoopContext) -> ReasoningRecord: ...


class ActionPolicy(Protocol):
    def act(self, context: LoopContext) -> ActionChunk: ...


@dataclass(frozen=True)
class StepResult:
    tokens: tuple[str, ...]
    record: ReasoningRecord | None
    chunk: ActionChunk | None
    state: LoopState
    context: LoopContext
    fault: str | None = None
    rejected: str | None = None


def apply_intervention(context: LoopContext, edited_sketch: VisualSketch,
                       directive: str | None = None,
                       style: SketchStyle = DEFAULT_STYLE) -> LoopContext:
    """Replace the active sketch with a human-edited one and re-render it.

    The edit must validate against the reference view; otherwise it is
    rejected with the validation report and the context is untouched.
    """
    report = validate_sketch(edited_sketch)
    if not report.ok:
        raise InterventionRejected("; ".join(report.messages()))
    ref = context.reference_frame()
    if (edited_sketch.frame.width, edited_sketch.frame.height) != (ref.width, ref.height):
        raise InterventionRejected(
            f"sketch frame {edited_sketch.frame.width}x{edited_sketch.frame.height} "
            f"does not match reference view {ref.width}x{ref.height}")
    image = render_sketch(ref, edited_sketch, style)
    return replace(context, current_sketch=edited_sketch, current_sketch_image=image)


def step(state: LoopState, context: LoopContext, event: LoopEvent,
         reasoner: Reasoner, policy: ActionPolicy, *,
         hitl_gate: bool = False, style: SketchStyle = DEFAULT_STYLE) -> StepResult:
    """Advance the loop by one gating decision.

    Boot (and any reasoning-trigger event while executing or awaiting
    approval) runs the full deliberation: BOR, reasoner, EOR, sketch render,
    context update. Executing with no event runs the action expert: BOA.
    """
    if state == LoopState.FAULTED:
        raise LoopError("loop is faulted; start a new session")

    if state in (LoopState.BOOT, LoopState.DELIBERATING):
        return _reason(state, context, event, reasoner, hitl_gate, style)

    if event.kind in REASONING_TRIGGERS:
        ctx = context
        if event.kind == EventKind.HUMAN_INTERVENTION and event.sketch is not None:
            try:
                ctx = apply_intervention(context, event.sketch, event.directive, style)
            except InterventionRejected as e:
                return StepResult((), None, None, state, context, rejected=str(e))
        return _reason(state, ctx, event, reasoner, hitl_gate, style)

    if state == LoopState.AWAITING_APPROVAL:
        # Parked until approve(); nothing to emit.
        return StepResult((), None, None, state, context)

    # Executing, no event: issue the next action chunk.
    try:
        chunk = policy.act(context)
    except Exception as e:
        return StepResult((BOA,), None, None, LoopState.FAULTED, context,
                          fault=f"policy failure: {e}")
    return StepResult((BOA,), None, chunk, LoopState.EXECUTING, context)


def _reason(state: LoopState, context: LoopContext, event: LoopEvent,
            reasoner: Reasoner, hitl_gate: bool, style: SketchStyle) -> StepResult:
    history = context.completed_subtasks
    if (event.kind == EventKind.SUBTASK_COMPLETE and state == LoopState.EXECUTING
            and context.current_subtask is not None):
        history = history + (context.current_subtask,)
    context = replace(context, completed_subtasks=history)

    try:
        record = reasoner.reason(context)
    except Exception as e:
        return StepResult((BOR,), None, None, LoopState.FAULTED, context,
                          fault=f"reasoner failure: {e}")

    report = validate_sketch(record.sketch)
    if not report.ok:
        return StepResult((BOR,), None, None, LoopState.FAULTED, context,
                          fault=f"reasoner produced an invalid sketch: {'; '.join(report.messages())}")
    ref = context.reference_frame()
    if (record.sketch.frame.width, record.sketch.frame.height) != (ref.width, ref.height):
        return StepResult((BOR,), None, None, LoopState.FAULTED, context,
                          fault="reasoner sketch frame does not match the reference view")

    image = render_sketch(ref, record.sketch, style)
    new_context = replace(context,
                          current_subtask=record.subtask,
                          current_sketch=record.sketch,
                          current_sketch_image=image)
    next_state = LoopState.AWAITING_APPROVAL if hitl_gate else LoopState.EXECUTING
    return StepResult((BOR, EOR), record, None, next_state, new_context)


class LoopSession:
    """Stateful wrapper: owns state, context, tick counter, and the audit log.

    Every log entry is a plain dict with a logical timestamp, so episode
    logs are byte-deterministic regardless of wall clock.
    """

    def __init__(self, reasoner: Reasoner, policy: ActionPolicy, context: LoopContext,
                 hitl_gate: bool = False, style: SketchStyle = DEFAULT_STYLE):
        self.reasoner = reasoner
        self.policy = policy
        self.context = context
        self.hitl_gate = hitl_gate
        self.style = style
        self.state = LoopState.BOOT
        self.tick = 0
        self.log: list[dict] = []

    # -- log helpers ---------------------------------------------------

    def _emit(self, **fields):
        entry = {"t": self.tick, "state": self.state.value}
        entry.update({k: v for k, v in fields.items() if v is not None})
        self.log.append(entry)

    # -- context plumbing ----------------------------------------------

    def update_observation(self, view: str, image: RasterImage,
                           proprio: Iterable[float] | None = None):
        obs = dict(self.context.observations)
        obs[view] = image
        kwargs = {"observations": obs}
        if proprio is not None:
            kwargs["proprio_state"] = tuple(proprio)
        self.context = replace(self.context, **kwargs)

    def update_proprio(self, proprio: Iterable[float]):
        self.context = replace(self.context, proprio_state=tuple(proprio))

    # -- transitions -----------------------------------------------------

    def step(self, event: LoopEvent = NO_EVENT) -> StepResult:
        self.tick += 1
        if event.kind != EventKind.NONE:
            self._emit(event=event.kind.value, directive=event.directive,
                       diagnostics=event.diagnostics)
        result = step(self.state, self.context, event, self.reasoner, self.policy,
                      hitl_gate=self.hitl_gate, style=self.style)

        if result.rejected is not None:
            self._emit(rejected=result.rejected)
            return result

        if result.tokens and result.tokens[0] == BOR:
            self.state = LoopState.DELIBERATING
            self._emit(token=BOR)
            if result.fault is None and result.record is not None:
                self.state = result.state
                self.context = result.context
                self._emit(token=EOR, subtask=result.record.subtask,
                           sketch_digest=image_digest(result.context.current_sketch_image))
        elif result.tokens and result.tokens[0] == BOA:
            if result.fault is None and result.chunk is not None:
                self.context = result.context
                sketch_img = self.context.current_sketch_image
                self._emit(token=BOA,
                           sketch_digest=image_digest(sketch_img) if sketch_img else None,
                           action_digest=result.chunk.digest())

        if result.fault is not None:
            self.state = LoopState.FAULTED
            self._emit(fault=result.fault)
        return result

    def approve(self):
        """Release a gated sketch proposal for execution."""
        if self.state != LoopState.AWAITING_APPROVAL:
            raise LoopError(f"approve is only legal in awaiting_approval, not {self.state.value}")
        self.tick += 1
        self.state = LoopState.EXECUTING
        self._emit(approved=True)

    def apply_intervention(self, edited_sketch: VisualSketch, directive: str | None = None,
                           editor: str = "operator"):
        """Direct sketch edit, legal while executing or awaiting approval."""
        if self.state not in (LoopState.EXECUTING, LoopState.AWAITING_APPROVAL):
            raise InterventionRejected(
                f"intervention is only legal in executing/awaiting_approval, not {self.state.value}")
        before = self.context.current_sketch_image
        new_context = apply_intervention(self.context, edited_sketch, directive, self.style)
        self.context = new_context
        self.tick += 1
        self._emit(intervention=editor,
                   directive=directive,
                   sketch_digest_before=image_digest(before) if before else None,
                   sketch_digest=image_digest(new_context.current_sketch_image))


def token_trace(episode_log: Iterable[dict | str]) -> list[tuple[str, int]]:
    """Ordered (token, timestamp) pairs extracted from an audit log."""
    out = []
    for entry in episode_log:
        if isinstance(entry, str):
            entry = json.loads(entry)
        if "token" in entry:
            out.append((entry["token"], entry.get("t", len(out))))
    return out


def trace_matches_grammar(tokens: list[str]) -> bool:
    """True iff the token sequence is in the language (BOR EOR BOA*)+."""
    if not tokens:
        return False
    i = 0
    n = len(tokens)
    while i < n:
        if tokens[i] != BOR:
            return False
        i += 1
        if i >= n or tokens[i] != EOR:
            return False
        i += 1
        while i < n and tokens[i] == BOA:
            i += 1
    return True
