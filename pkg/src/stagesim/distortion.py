"""Room-distortion treatments and locomotion metrics.

Five time-parameterized geometry transforms (elongation, warp, shift,
elevation, enlarge) run against a physical room model on a 60 s apply/return
timeline. A floating particle field fills the current virtual volume, and
locomotion traces are scored with the axis-movement, distance-to-center,
total-walking-distance, and tile-density metrics.

Treatment magnitudes:

    elongation   one short-side wall recedes 3.35 m
    warp         both long walls bend 160 deg along a 19.33 m extension
    shift        room slides 5.14 m sideways
    elevation    room rises 8.07 m
    enlarge      each dimension doubles (volume x8)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .trace import LocomotionTrace

ELONGATION_EXTENT_M = 3.35
WARP_ANGLE_RAD = math.radians(160.0)
WARP_ARC_LENGTH_M = 19.33
SHIFT_EXTENT_M = 5.14
ELEVATION_EXTENT_M = 8.07
ENLARGE_FACTOR = 2.0
SEGMENT_S = 10.0
HOLD_S = 5.0
TRIAL_S = 60.0
PARTICLE_RADIUS_M = 0.0192
PARTICLE_SPEED_M_S = 0.01
PARTICLE_DENSITY_PER_M3 = 712.0 / 1000.0  # 712 particles per 10 m cube
PARTICLE_REDIRECT_MEAN_S = 5.0
DENSITY_TILE_M = 0.65
DENSITY_WINDOW_LEAD_S = 2.0
DENSITY_WINDOW_SPAN_S = 4.0


class DistortionError(Exception):
    pass


class InvalidProgress(DistortionError):
    pass


class OutOfRange(DistortionError):
    pass


class EmptyWindow(DistortionError):
    pass


class TooFewSamples(DistortionError):
    pass


# ---------------------------------------------------------------------------
# room model and treatments


@dataclass(frozen=True)
class RoomModel:
    """Physical room footprint with its min corner at the origin."""

    width: float = 4.5   # x extent; the smaller dimension is "the axis"
    length: float = 5.5  # y extent
    height: float = 2.5  # z extent
    tile: float = DENSITY_TILE_M

    def __post_init__(self):
        if min(self.width, self.length, self.height, self.tile) <= 0:
            raise DistortionError("room dimensions and tile must be positive")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.width / 2, self.length / 2, self.height / 2])

    @property
    def volume(self) -> float:
        return self.width * self.length * self.height

    def short_axis(self) -> np.ndarray:
        """Unit vector along the smaller floor dimension."""
        return np.array([1.0, 0.0]) if self.width <= self.length else np.array([0.0, 1.0])


class TreatmentKind(Enum):
    ELONGATION = "elongation"
    WARP = "warp"
    SHIFT = "shift"
    ELEVATION = "elevation"
    ENLARGE = "enlarge"


@dataclass(frozen=True)
class DistortionTreatment:
    kind: TreatmentKind
    elongation_extent: float = ELONGATION_EXTENT_M
    warp_angle: float = WARP_ANGLE_RAD
    warp_length: float = WARP_ARC_LENGTH_M
    shift_extent: float = SHIFT_EXTENT_M
    elevation_extent: float = ELEVATION_EXTENT_M
    enlarge_factor: float = ENLARGE_FACTOR

    def __post_init__(self):
        values = (
            self.elongation_extent,
            self.warp_angle,
            self.warp_length,
            self.shift_extent,
            self.elevation_extent,
        )
        if min(values) <= 0:
            raise DistortionError("treatment extents must be positive")
        if self.enlarge_factor <= 1:
            raise DistortionError("enlarge factor must exceed 1")


def treatment(kind: TreatmentKind | str) -> DistortionTreatment:
    return DistortionTreatment(TreatmentKind(kind))


class Phase(Enum):
    APPLY = "apply"
    RETURN = "return"
    HOLD = "hold"


def room_vertices(room: RoomModel, subdiv: int = 8) -> np.ndarray:
    """Sample the six room faces on a (subdiv+1)^2 grid each."""
    w, l, h = room.width, room.length, room.height
    u = np.linspace(0.0, 1.0, subdiv + 1)
    faces = []
    for fixed_axis, fixed_val in (
        (0, 0.0), (0, w), (1, 0.0), (1, l), (2, 0.0), (2, h),
    ):
        a, b = np.meshgrid(u, u, indexing="ij")
        pts = np.zeros((a.size, 3))
        free = [ax for ax in range(3) if ax != fixed_axis]
        spans = [w, l, h]
        pts[:, free[0]] = a.ravel() * spans[free[0]]
        pts[:, free[1]] = b.ravel() * spans[free[1]]
        pts[:, fixed_axis] = fixed_val
        faces.append(pts)
    return np.vstack(faces)


def treatment_transform(
    room: RoomModel, t: DistortionTreatment, extent: float
) -> Callable[[np.ndarray], np.ndarray]:
    """Vertex map at a given apply-equivalent extent in [0, 1].

    Extent 0 is the identity; extent 1 reaches the treatment's full
    magnitude. The map is continuous in extent for every kind.
    """
    w, l = room.width, room.length

    if t.kind is TreatmentKind.ELONGATION:
        scale = (l + t.elongation_extent * extent) / l

        def f(v: np.ndarray) -> np.ndarray:
            out = v.copy()
            out[:, 1] *= scale
            return out

    elif t.kind is TreatmentKind.WARP:
        theta = t.warp_angle * extent
        arc = t.warp_length

        def f(v: np.ndarray) -> np.ndarray:
            out = v.copy()
            if theta < 1e-12:
                return out
            radius = arc / theta
            phi = out[:, 1] / radius
            offset = out[:, 0] - w / 2
            out[:, 0] = w / 2 + radius * (1 - np.cos(phi)) + offset * np.cos(phi)
            out[:, 1] = (radius - offset) * np.sin(phi)
            return out

    elif t.kind is TreatmentKind.SHIFT:
        dx = t.shift_extent * extent

        def f(v: np.ndarray) -> np.ndarray:
            out = v.copy()
            out[:, 0] += dx
            return out

    elif t.kind is TreatmentKind.ELEVATION:
        dz = t.elevation_extent * extent

        def f(v: np.ndarray) -> np.ndarray:
            out = v.copy()
            out[:, 2] += dz
            return out

    else:  # ENLARGE
        factor = 1.0 + extent * (t.enlarge_factor - 1.0)
        center = room.center

        def f(v: np.ndarray) -> np.ndarray:
            return center + (v - center) * factor

    return f


def treatment_geometry(
    room: RoomModel,
    t: DistortionTreatment,
    phase: Phase,
    progress: float,
    vertices: np.ndarray | None = None,
) -> np.ndarray:
    """Transformed room vertices at the given phase progress.

    Apply ramps the extent 0 -> 1 with progress; Return plays it backwards,
    so Return at progress p reproduces Apply at 1-p exactly.
    """
    if not 0.0 <= progress <= 1.0:
        raise InvalidProgress(f"progress must be in [0, 1], got {progress}")
    if phase is Phase.APPLY:
        extent = progress
    elif phase is Phase.RETURN:
        extent = 1.0 - progress
    else:
        raise InvalidProgress("geometry phase must be Apply or Return")
    if vertices is None:
        vertices = room_vertices(room)
    return treatment_transform(room, t, extent)(np.asarray(vertices, dtype=np.float64))


# ---------------------------------------------------------------------------
# timeline


@dataclass(frozen=True)
class TreatmentTimeline:
    segments: tuple[tuple[Phase, float], ...]

    def __post_init__(self):
        if not self.segments:
            raise DistortionError("timeline needs at least one segment")
        if any(d <= 0 for _, d in self.segments):
            raise DistortionError("segment durations must be positive")
        moving = [p for p, _ in self.segments if p is not Phase.HOLD]
        for prev, cur in zip(moving, moving[1:]):
            if prev is cur:
                raise DistortionError("Apply/Return segments must alternate")

    @property
    def total(self) -> float:
        return sum(d for _, d in self.segments)


def default_timeline() -> TreatmentTimeline:
    """60 s trial: two apply/return cycles with 5 s holds between phases."""
    cycle = (
        (Phase.APPLY, SEGMENT_S),
        (Phase.HOLD, HOLD_S),
        (Phase.RETURN, SEGMENT_S),
        (Phase.HOLD, HOLD_S),
    )
    return TreatmentTimeline(cycle * 2)


def timeline_step(timeline: TreatmentTimeline, t: float) -> tuple[Phase, float]:
    """Segment phase and within-segment progress at time t.

    Hold segments freeze the extent reached by the previous segment; for
    them the returned progress is that frozen apply-equivalent extent.
    """
    if not 0.0 <= t <= timeline.total:
        raise OutOfRange(f"t={t} outside [0, {timeline.total}]")
    extent = 0.0
    start = 0.0
    for phase, duration in timeline.segments:
        end = start + duration
        if t <= end:
            local = (t - start) / duration
            if phase is Phase.APPLY:
                return Phase.APPLY, local
            if phase is Phase.RETURN:
                return Phase.RETURN, local
            return Phase.HOLD, extent
        if phase is Phase.APPLY:
            extent = 1.0
        elif phase is Phase.RETURN:
            extent = 0.0
        start = end
    return timeline.segments[-1][0], 1.0  # t == total, closed end


def timeline_extent(timeline: TreatmentTimeline, t: float) -> float:
    """Apply-equivalent extent in [0, 1] at time t."""
    phase, progress = timeline_step(timeline, t)
    if phase is Phase.APPLY:
        return progress
    if phase is Phase.RETURN:
        return 1.0 - progress
    return progress


def geometry_at(
    room: RoomModel,
    t_treatment: DistortionTreatment,
    timeline: TreatmentTimeline,
    t: float,
    vertices: np.ndarray | None = None,
) -> np.ndarray:
    extent = timeline_extent(timeline, t)
    if vertices is None:
        vertices = room_vertices(room)
    return treatment_transform(room, t_treatment, extent)(np.asarray(vertices, dtype=np.float64))


def stimulus_windows(
    timeline: TreatmentTimeline,
    lead: float = DENSITY_WINDOW_LEAD_S,
    span: float = DENSITY_WINDOW_SPAN_S,
) -> list[tuple[float, float]]:
    """Two windows per Apply/Return segment: span seconds starting lead
    seconds after the segment begins, and ending lead seconds before it ends."""
    windows = []
    start = 0.0
    for phase, duration in timeline.segments:
        end = start + duration
        if phase is not Phase.HOLD:
            windows.append((start + lead, start + lead + span))
            windows.append((end - lead - span, end - lead))
        start = end
    return windows


# ---------------------------------------------------------------------------
# particle field


@dataclass(frozen=True)
class ParticleField:
    positions: np.ndarray   # (N, 3)
    directions: np.ndarray  # (N, 3) unit
    radius: float = PARTICLE_RADIUS_M
    speed: float = PARTICLE_SPEED_M_S
    density: float = PARTICLE_DENSITY_PER_M3


def _box_volume(lo: np.ndarray, hi: np.ndarray) -> float:
    return float(np.prod(hi - lo))


def _random_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def new_particle_field(
    bounds: tuple[Sequence[float], Sequence[float]],
    rng: np.random.Generator,
    density: float = PARTICLE_DENSITY_PER_M3,
) -> ParticleField:
    lo = np.asarray(bounds[0], dtype=np.float64)
    hi = np.asarray(bounds[1], dtype=np.float64)
    n = max(1, round(density * _box_volume(lo, hi)))
    pos = lo + rng.random((n, 3)) * (hi - lo)
    return ParticleField(pos, _random_directions(rng, n), density=density)


def particle_field_step(
    field: ParticleField,
    bounds: tuple[Sequence[float], Sequence[float]],
    dt: float,
    rng: np.random.Generator,
) -> ParticleField:
    """Drift at 1 cm/s, reflect at the volume bounds, occasionally re-aim.

    The population is rescaled to density x current volume, so growing the
    virtual room spawns proportionally more particles.
    """
    if dt <= 0:
        raise DistortionError(f"dt must be positive, got {dt}")
    lo = np.asarray(bounds[0], dtype=np.float64)
    hi = np.asarray(bounds[1], dtype=np.float64)
    pos = field.positions + field.directions * field.speed * dt
    dirs = field.directions.copy()
    # specular reflection by folding into the box
    for axis in range(3):
        for _ in range(4):
            below = pos[:, axis] < lo[axis]
            above = pos[:, axis] > hi[axis]
            if not below.any() and not above.any():
                break
            pos[below, axis] = 2 * lo[axis] - pos[below, axis]
            pos[above, axis] = 2 * hi[axis] - pos[above, axis]
            dirs[below | above, axis] *= -1.0
    # Poisson re-aim with mean holding time
    redirect = rng.random(len(pos)) < 1.0 - math.exp(-dt / PARTICLE_REDIRECT_MEAN_S)
    if redirect.any():
        dirs[redirect] = _random_directions(rng, int(redirect.sum()))
    # rescale population to the current volume
    target = max(1, round(field.density * _box_volume(lo, hi)))
    if target < len(pos):
        pos, dirs = pos[:target], dirs[:target]
    elif target > len(pos):
        extra = target - len(pos)
        pos = np.vstack([pos, lo + rng.random((extra, 3)) * (hi - lo)])
        dirs = np.vstack([dirs, _random_directions(rng, extra)])
    return ParticleField(pos, dirs, field.radius, field.speed, field.density)


# ---------------------------------------------------------------------------
# locomotion metrics


@dataclass(frozen=True)
class SegmentMetrics:
    phase: Phase
    window: tuple[float, float]
    axis_movement: float
    center_distance_change: float


def _check_window(trace: LocomotionTrace, window: tuple[float, float]) -> None:
    t0, t1 = window
    lo, hi = trace.span
    if not (lo <= t0 < t1 <= hi):
        raise EmptyWindow(f"window {window} outside trace span ({lo}, {hi})")


def axis_movement(
    trace: LocomotionTrace,
    window: tuple[float, float],
    axis: Sequence[float] = (1.0, 0.0),
) -> float:
    """Signed start-to-end displacement projected on the room's short axis."""
    _check_window(trace, window)
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    delta = trace.position_at(window[1]) - trace.position_at(window[0])
    return float(delta @ a)


def center_distance_change(
    trace: LocomotionTrace,
    window: tuple[float, float],
    center: Sequence[float],
) -> float:
    """Radial distance from the room center: end minus start."""
    _check_window(trace, window)
    c = np.asarray(center[:2], dtype=np.float64)
    d0 = float(np.linalg.norm(trace.position_at(window[0]) - c))
    d1 = float(np.linalg.norm(trace.position_at(window[1]) - c))
    return d1 - d0


def total_walking_distance(trace: LocomotionTrace) -> float:
    if len(trace) < 2:
        raise TooFewSamples("need at least two samples")
    return float(np.sum(np.linalg.norm(np.diff(trace.positions, axis=0), axis=1)))


def segment_metrics(
    trace: LocomotionTrace,
    timeline: TreatmentTimeline,
    room: RoomModel,
) -> list[SegmentMetrics]:
    """Per Apply/Return segment: axis displacement and center-distance change."""
    axis = room.short_axis()
    center = room.center[:2]
    out = []
    start = 0.0
    for phase, duration in timeline.segments:
        end = start + duration
        if phase is not Phase.HOLD:
            window = (start, end)
            out.append(
                SegmentMetrics(
                    phase,
                    window,
                    axis_movement(trace, window, axis),
                    center_distance_change(trace, window, center),
                )
            )
        start = end
    return out


def segment_metrics_csv(rows: Sequence[tuple[str, SegmentMetrics]]) -> str:
    """One CSV row per (trace label, segment)."""
    lines = ["trace,phase,window_start,window_end,axis_movement,center_distance_change\n"]
    for label, m in rows:
        lines.append(
            f"{label},{m.phase.value},{m.window[0]!r},{m.window[1]!r},"
            f"{m.axis_movement!r},{m.center_distance_change!r}\n"
        )
    return "".join(lines)


# ---------------------------------------------------------------------------
# density maps


def density_map(
    traces: Sequence[LocomotionTrace],
    room: RoomModel,
    tile: float | None = None,
    windows: Sequence[tuple[float, float]] | None = None,
) -> np.ndarray:
    """Occupancy counts per floor tile over the stimulus windows.

    Returns an (ny, nx) array indexed row-major from the room's min corner;
    samples outside the footprint clip into the border tiles.
    """
    tile = tile if tile is not None else room.tile
    nx = int(math.ceil(room.width / tile))
    ny = int(math.ceil(room.length / tile))
    hist = np.zeros((ny, nx), dtype=np.int64)
    for trace in traces:
        times = trace.times
        if windows is None:
            mask = np.ones(len(times), dtype=bool)
        else:
            mask = np.zeros(len(times), dtype=bool)
            for t0, t1 in windows:
                mask |= (times >= t0) & (times <= t1)
        pts = trace.positions[mask]
        if len(pts) == 0:
            continue
        ix = np.clip((pts[:, 0] // tile).astype(int), 0, nx - 1)
        iy = np.clip((pts[:, 1] // tile).astype(int), 0, ny - 1)
        np.add.at(hist, (iy, ix), 1)
    return hist


def density_pgm(hist: np.ndarray) -> bytes:
    """ASCII PGM, max count mapped to white."""
    peak = int(hist.max()) if hist.size else 0
    lines = [f"P2\n{hist.shape[1]} {hist.shape[0]}\n255\n"]
    for row in hist:
        if peak > 0:
            vals = [str(int(v * 255 / peak)) for v in row]
        else:
            vals = ["0"] * len(row)
        lines.append(" ".join(vals) + "\n")
    return "".join(lines).encode("ascii")


def density_meta(
    room: RoomModel, tile: float, windows: Sequence[tuple[float, float]]
) -> str:
    return json.dumps(
        {
            "tile_m": tile,
            "room": {"width": room.width, "length": room.length},
            "windows": [[t0, t1] for t0, t1 in windows],
        },
        indent=2,
        sort_keys=True,
    )
