"""Bubble-based spatial instrument.

Ten chord-labeled bubbles drift at head height inside a fenced square,
bouncing off the fence like molecules in a closed box, one meter every five
seconds. A note turns on exactly while the walker's head is inside a bubble,
so overlapping bubbles sound as chords.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

FENCE_SIDE_M = 3.3
BUBBLE_DIAMETER_M = 0.80
BUBBLE_SPEED_M_S = 0.2  # one meter every five seconds
REAIM_MEAN_S = 8.0
CHORDS = ("EMaj", "Em", "FMaj7", "GMaj", "G7", "Am", "Bdim", "Bm5", "Cmaj", "Dm")
DEFAULT_ALTITUDE_M = 1.6


class BubbleError(Exception):
    pass


class InvalidAltitude(BubbleError):
    pass


class MisalignedTraces(BubbleError):
    pass


@dataclass(frozen=True)
class PlaySpace:
    """Square virtual fence centered on the center marker."""

    side: float = FENCE_SIDE_M
    center: tuple[float, float] = (0.0, 0.0)

    def inset_bounds(self, radius: float) -> tuple[float, float, float, float]:
        """Travel bounds for a bubble center so the bubble stays inside."""
        half = self.side / 2 - radius
        cx, cy = self.center
        return (cx - half, cy - half, cx + half, cy + half)


@dataclass(frozen=True)
class Bubble:
    id: int
    chord: str
    center: np.ndarray    # (3,)
    velocity: np.ndarray  # (2,) horizontal, |v| = speed
    diameter: float = BUBBLE_DIAMETER_M

    @property
    def radius(self) -> float:
        return self.diameter / 2


def make_bubbles(
    space: PlaySpace,
    rng: np.random.Generator,
    altitude: float = DEFAULT_ALTITUDE_M,
    speed: float = BUBBLE_SPEED_M_S,
) -> tuple[Bubble, ...]:
    """Spawn the ten chord bubbles at random positions and headings."""
    x0, y0, x1, y1 = space.inset_bounds(BUBBLE_DIAMETER_M / 2)
    bubbles = []
    for i, chord in enumerate(CHORDS):
        pos = np.array(
            [rng.uniform(x0, x1), rng.uniform(y0, y1), altitude], dtype=np.float64
        )
        angle = rng.uniform(0.0, 2.0 * math.pi)
        vel = speed * np.array([math.cos(angle), math.sin(angle)])
        bubbles.append(Bubble(i, chord, pos, vel))
    return tuple(bubbles)


def _fold(value: float, lo: float, hi: float, v: float) -> tuple[float, float]:
    """Reflect a coordinate into [lo, hi], flipping velocity per bounce."""
    for _ in range(16):
        if value < lo:
            value = 2 * lo - value
            v = -v
        elif value > hi:
            value = 2 * hi - value
            v = -v
        else:
            break
    return value, v


def bubble_step(
    bubbles: Sequence[Bubble],
    space: PlaySpace,
    dt: float,
    rng: np.random.Generator | None = None,
) -> tuple[Bubble, ...]:
    """Advance bubbles one tick with specular fence reflections.

    Headings persist between Poisson-scheduled random re-aims (rng=None
    disables re-aiming); reflections negate one velocity component, so speed
    is preserved bit-for-bit across bounces.
    """
    if dt <= 0:
        raise BubbleError(f"dt must be positive, got {dt}")
    out = []
    for b in bubbles:
        x0, y0, x1, y1 = space.inset_bounds(b.radius)
        vx, vy = float(b.velocity[0]), float(b.velocity[1])
        px = float(b.center[0]) + vx * dt
        py = float(b.center[1]) + vy * dt
        px, vx = _fold(px, x0, x1, vx)
        py, vy = _fold(py, y0, y1, vy)
        vel = np.array([vx, vy])
        if rng is not None and rng.random() < 1.0 - math.exp(-dt / REAIM_MEAN_S):
            speed = float(np.hypot(vx, vy))
            angle = rng.uniform(0.0, 2.0 * math.pi)
            vel = speed * np.array([math.cos(angle), math.sin(angle)])
        out.append(replace(b, center=np.array([px, py, float(b.center[2])]), velocity=vel))
    return tuple(out)


def head_inside(bubble: Bubble, head: Sequence[float]) -> bool:
    """True iff the head is within the bubble's 0.40 m radius."""
    d = np.asarray(head, dtype=np.float64) - bubble.center
    return float(np.linalg.norm(d)) <= bubble.radius


def accessibility_set_height(bubbles: Sequence[Bubble], altitude: float) -> tuple[Bubble, ...]:
    """Move every bubble to a new altitude; horizontal state is untouched."""
    if altitude <= 0:
        raise InvalidAltitude(f"altitude must be positive, got {altitude}")
    return tuple(
        replace(b, center=np.array([b.center[0], b.center[1], altitude])) for b in bubbles
    )


# ---------------------------------------------------------------------------
# note events


@dataclass(frozen=True)
class NoteEvent:
    time: float
    bubble_id: int
    chord: str
    kind: str  # "on" | "off"


def note_events(
    head_trace: Sequence[Sequence[float]],
    bubble_frames: Sequence[Sequence[Bubble]],
    dt: float,
) -> list[NoteEvent]:
    """On/off transitions of the head-inside test over aligned frame streams.

    ``head_trace`` holds one 3D head position per frame; ``bubble_frames``
    holds the bubble tuple for the same frames. Frame k is at time k*dt.
    """
    if len(head_trace) != len(bubble_frames):
        raise MisalignedTraces(
            f"head trace has {len(head_trace)} frames, bubbles {len(bubble_frames)}"
        )
    events: list[NoteEvent] = []
    inside_prev: dict[int, bool] = {}
    for k, (head, bubbles) in enumerate(zip(head_trace, bubble_frames)):
        t = k * dt
        for b in bubbles:
            now = head_inside(b, head)
            before = inside_prev.get(b.id, False)
            if now and not before:
                events.append(NoteEvent(t, b.id, b.chord, "on"))
            elif before and not now:
                events.append(NoteEvent(t, b.id, b.chord, "off"))
            inside_prev[b.id] = now
    return events


def note_events_jsonl(events: Sequence[NoteEvent]) -> str:
    return "".join(
        json.dumps({"time": e.time, "bubble": e.bubble_id, "chord": e.chord, "kind": e.kind})
        + "\n"
        for e in events
    )


def note_events_csv(events: Sequence[NoteEvent]) -> str:
    lines = ["time,bubble,chord,kind\n"]
    lines.extend(f"{e.time!r},{e.bubble_id},{e.chord},{e.kind}\n" for e in events)
    return "".join(lines)
