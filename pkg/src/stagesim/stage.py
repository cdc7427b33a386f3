"""Cue-sheet stage engine.

Executes an authored play: content zones trigger performance clips when the
walker enters them, a stage-advance spiral spawns once every zone in the
current stage has finished, and entering the spiral advances to the next
themed stage (or ends the play on the last one).

The engine is a pure state machine: ``step`` maps (state, pose, dt) to a new
state plus the events emitted during that tick, so identical inputs replay to
identical event streams.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

DEFAULT_ZONE_RADIUS = math.sqrt(2.8 / math.pi)  # circle with 2.8 m^2 area
DEFAULT_TRIGGER_RADIUS = 1.0
DEFAULT_DT = 0.02  # 50 Hz, typical headset tracking rate
MIN_ZONE_SPACING = 2.0


class StageError(Exception):
    pass


class CueSheetError(StageError):
    pass


class MalformedEventStream(StageError):
    pass


@dataclass(frozen=True)
class Circle:
    radius: float


@dataclass(frozen=True)
class Square:
    side: float


def shape_contains(shape: Circle | Square, center: Sequence[float], p: Sequence[float]) -> bool:
    dx = float(p[0]) - float(center[0])
    dy = float(p[1]) - float(center[1])
    if isinstance(shape, Circle):
        return math.hypot(dx, dy) <= shape.radius
    return abs(dx) <= shape.side / 2 and abs(dy) <= shape.side / 2


def shape_area(shape: Circle | Square) -> float:
    if isinstance(shape, Circle):
        return math.pi * shape.radius**2
    return shape.side**2


@dataclass(frozen=True)
class PerformanceClip:
    id: str
    duration: float  # seconds, 10-30 s typical

    def __post_init__(self):
        if self.duration <= 0:
            raise CueSheetError(f"clip {self.id!r} duration must be positive")


@dataclass(frozen=True)
class ContentZone:
    id: str
    center: tuple[float, float]
    shape: Circle | Square
    clip: PerformanceClip

    def __post_init__(self):
        if shape_area(self.shape) <= 0:
            raise CueSheetError(f"zone {self.id!r} has zero area")

    def contains(self, p: Sequence[float]) -> bool:
        return shape_contains(self.shape, self.center, p)


@dataclass(frozen=True)
class LocationTrigger:
    center: tuple[float, float]
    radius: float = DEFAULT_TRIGGER_RADIUS
    one_shot: bool = True
    payload: str = ""

    def __post_init__(self):
        if self.radius <= 0:
            raise CueSheetError("trigger radius must be positive")


def trigger_check(trigger: LocationTrigger, pose: Sequence[float], fired_before: bool) -> bool:
    """Closed-boundary proximity test; one-shot triggers fire at most once."""
    if trigger.one_shot and fired_before:
        return False
    dx = float(pose[0]) - trigger.center[0]
    dy = float(pose[1]) - trigger.center[1]
    return math.hypot(dx, dy) <= trigger.radius


class GuidanceMode(Enum):
    PARTICLE = "particle"
    ARROW = "arrow"
    NONE = "none"


@dataclass(frozen=True)
class Stage:
    theme: str
    zones: tuple[ContentZone, ...]
    guidance: GuidanceMode
    spiral: tuple[float, float]
    spiral_radius: float = DEFAULT_TRIGGER_RADIUS


@dataclass(frozen=True)
class CueSheet:
    stages: tuple[Stage, ...]

    def __post_init__(self):
        if not self.stages:
            raise CueSheetError("cue sheet needs at least one stage")
        for stage in self.stages:
            if not stage.zones:
                raise CueSheetError(f"stage {stage.theme!r} has no zones")
            for i in range(len(stage.zones)):
                for j in range(i + 1, len(stage.zones)):
                    a, b = stage.zones[i].center, stage.zones[j].center
                    if math.hypot(a[0] - b[0], a[1] - b[1]) < MIN_ZONE_SPACING:
                        raise CueSheetError(
                            f"zones {stage.zones[i].id!r} and {stage.zones[j].id!r} "
                            f"are closer than {MIN_ZONE_SPACING} m"
                        )


class EventKind(Enum):
    TRIGGER_FIRED = "TriggerFired"
    CLIP_STARTED = "ClipStarted"
    CLIP_ENDED = "ClipEnded"
    SPIRAL_SPAWNED = "SpiralSpawned"
    STAGE_ADVANCED = "StageAdvanced"
    PLAY_ENDED = "PlayEnded"


@dataclass(frozen=True)
class StageEvent:
    time: float
    kind: EventKind
    subject: str


class ZoneStatus(Enum):
    UNVISITED = "unvisited"
    PLAYING = "playing"
    DONE = "done"


@dataclass(frozen=True)
class StageState:
    stage_index: int
    zone_status: tuple[ZoneStatus, ...]
    clip_clock: tuple[float, ...]
    spiral_active: bool
    time: float
    ended: bool


def initial_state(sheet: CueSheet) -> StageState:
    n = len(sheet.stages[0].zones)
    return StageState(0, (ZoneStatus.UNVISITED,) * n, (0.0,) * n, False, 0.0, False)


def step(
    state: StageState,
    sheet: CueSheet,
    pose: Sequence[float],
    dt: float,
) -> tuple[StageState, list[StageEvent]]:
    """Advance the play by one tick of dt seconds at the given walker pose.

    Entering an unvisited zone starts its clip; a started clip runs to
    completion regardless of where the walker goes. Once every zone is done
    the spiral spawns exactly once, and entering it advances the stage or
    ends the play.
    """
    if dt <= 0:
        raise StageError(f"dt must be positive, got {dt}")
    if state.ended:
        return state, []

    t = state.time + dt
    stage = sheet.stages[state.stage_index]
    status = list(state.zone_status)
    clocks = list(state.clip_clock)
    events: list[StageEvent] = []

    for i, zone in enumerate(stage.zones):
        if status[i] is ZoneStatus.PLAYING:
            clocks[i] += dt
            if clocks[i] >= zone.clip.duration:
                status[i] = ZoneStatus.DONE
                events.append(StageEvent(t, EventKind.CLIP_ENDED, zone.clip.id))
        elif status[i] is ZoneStatus.UNVISITED and zone.contains(pose):
            status[i] = ZoneStatus.PLAYING
            clocks[i] = 0.0
            events.append(StageEvent(t, EventKind.TRIGGER_FIRED, zone.id))
            events.append(StageEvent(t, EventKind.CLIP_STARTED, zone.clip.id))

    spiral_active = state.spiral_active
    if not spiral_active and all(s is ZoneStatus.DONE for s in status):
        spiral_active = True
        events.append(StageEvent(t, EventKind.SPIRAL_SPAWNED, stage.theme))

    stage_index = state.stage_index
    ended = False
    if spiral_active:
        dx = float(pose[0]) - stage.spiral[0]
        dy = float(pose[1]) - stage.spiral[1]
        if math.hypot(dx, dy) <= stage.spiral_radius:
            if state.stage_index + 1 < len(sheet.stages):
                stage_index = state.stage_index + 1
                events.append(StageEvent(t, EventKind.STAGE_ADVANCED, sheet.stages[stage_index].theme))
                n = len(sheet.stages[stage_index].zones)
                status = [ZoneStatus.UNVISITED] * n
                clocks = [0.0] * n
                spiral_active = False
            else:
                events.append(StageEvent(t, EventKind.PLAY_ENDED, stage.theme))
                ended = True

    return (
        StageState(stage_index, tuple(status), tuple(clocks), spiral_active, t, ended),
        events,
    )


# ---------------------------------------------------------------------------
# timing report


@dataclass(frozen=True)
class StageTimingReport:
    stage_durations: tuple[float, ...]
    visit_orders: tuple[tuple[str, ...], ...]  # zone ids in entry order, per stage
    total_distance: float | None


def stage_timing_report(
    events: Sequence[StageEvent],
    trace: Sequence[Sequence[float]] | None = None,
) -> StageTimingReport:
    """Durations between stage boundaries, zone visit order, walked distance.

    ``trace`` rows are (t, x, y, ...) samples; when given, total distance is
    the integrated polyline length.
    """
    last_t = -math.inf
    for ev in events:
        if ev.time < last_t:
            raise MalformedEventStream(f"event at t={ev.time} out of order")
        last_t = ev.time

    durations: list[float] = []
    visit_orders: list[tuple[str, ...]] = []
    current_visits: list[str] = []
    stage_start = 0.0
    ended = False
    for ev in events:
        if ended:
            raise MalformedEventStream("events after PlayEnded")
        if ev.kind is EventKind.TRIGGER_FIRED:
            current_visits.append(ev.subject)
        elif ev.kind in (EventKind.STAGE_ADVANCED, EventKind.PLAY_ENDED):
            durations.append(ev.time - stage_start)
            visit_orders.append(tuple(current_visits))
            current_visits = []
            stage_start = ev.time
            if ev.kind is EventKind.PLAY_ENDED:
                ended = True

    distance = None
    if trace is not None:
        rows = list(trace)
        if len(rows) >= 2:
            distance = 0.0
            for a, b in zip(rows, rows[1:]):
                distance += math.hypot(b[1] - a[1], b[2] - a[2])
        else:
            distance = 0.0
    return StageTimingReport(tuple(durations), tuple(visit_orders), distance)


# ---------------------------------------------------------------------------
# JSON interchange (cue sheet schema v1, events as JSONL)

CUE_SHEET_SCHEMA_VERSION = 1


def _shape_to_json(shape: Circle | Square) -> dict:
    if isinstance(shape, Circle):
        return {"kind": "circle", "radius": shape.radius}
    return {"kind": "square", "side": shape.side}


def _shape_from_json(doc: dict) -> Circle | Square:
    if doc["kind"] == "circle":
        return Circle(float(doc["radius"]))
    if doc["kind"] == "square":
        return Square(float(doc["side"]))
    raise CueSheetError(f"unknown zone shape kind: {doc['kind']!r}")


def cue_sheet_to_json(sheet: CueSheet) -> str:
    doc = {
        "version": CUE_SHEET_SCHEMA_VERSION,
        "stages": [
            {
                "theme": st.theme,
                "guidance": st.guidance.value,
                "spiral": list(st.spiral),
                "spiral_radius": st.spiral_radius,
                "zones": [
                    {
                        "id": z.id,
                        "center": list(z.center),
                        "shape": _shape_to_json(z.shape),
                        "clip": {"id": z.clip.id, "duration": z.clip.duration},
                    }
                    for z in st.zones
                ],
            }
            for st in sheet.stages
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def cue_sheet_from_json(text: str) -> CueSheet:
    doc = json.loads(text)
    if doc.get("version") != CUE_SHEET_SCHEMA_VERSION:
        raise CueSheetError(f"unsupported cue sheet version: {doc.get('version')}")
    stages = []
    for st in doc["stages"]:
        zones = tuple(
            ContentZone(
                z["id"],
                (float(z["center"][0]), float(z["center"][1])),
                _shape_from_json(z["shape"]),
                PerformanceClip(z["clip"]["id"], float(z["clip"]["duration"])),
            )
            for z in st["zones"]
        )
        stages.append(
            Stage(
                st["theme"],
                zones,
                GuidanceMode(st["guidance"]),
                (float(st["spiral"][0]), float(st["spiral"][1])),
                float(st.get("spiral_radius", DEFAULT_TRIGGER_RADIUS)),
            )
        )
    return CueSheet(tuple(stages))


def events_to_jsonl(events: Sequence[StageEvent]) -> str:
    return "".join(
        json.dumps({"time": ev.time, "kind": ev.kind.value, "subject": ev.subject}) + "\n"
        for ev in events
    )


def events_from_jsonl(text: str) -> list[StageEvent]:
    events = []
    for line in text.splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        events.append(StageEvent(float(doc["time"]), EventKind(doc["kind"]), str(doc["subject"])))
    return events
