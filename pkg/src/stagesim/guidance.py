"""Navigational aids computed per simulation tick.

Covers the four aid families: drifting guidance particles whose velocity is
re-aimed exactly at the target once per second, the in-world arrow held 40 cm
above the ground and 2 m ahead of the walker, forward-up radar and horizontal
compass projections, and a 1/distance spatial-audio gain cue.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .pose import Pose, wrap_angle

ARROW_HEIGHT = 0.40        # m above the ground
ARROW_DISTANCE = 2.0       # m ahead of the walker's head projection
ARROW_FADE_S = 1.0         # linear opacity ramp
PARTICLE_RESET_S = 1.0     # velocity re-aimed at the target this often
AUDIO_GAIN_CLAMP_M = 1.0   # full gain inside this distance


class GuidanceError(Exception):
    pass


# ---------------------------------------------------------------------------
# guidance particles


@dataclass(frozen=True)
class ParticleConfig:
    count: int = 4                      # paper shows one to six
    speed: float = 1.0                  # m/s, constant
    noise_deg_per_sqrt_s: float = 15.0  # direction diffusion scale
    respawn_radius: float = 0.3         # m, sphere around the spawn point
    respawn_forward: float = 0.2        # m ahead of the head
    arrive_radius: float = 0.3          # m, closeness that counts as arrival
    max_age_s: float = 10.0             # stragglers respawn after this
    streak_span_s: float = 0.5          # trail history kept per particle

    def __post_init__(self):
        if not 1 <= self.count <= 6:
            raise GuidanceError(f"particle count must be in [1, 6], got {self.count}")


@dataclass(frozen=True)
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    age: float
    since_reset: float
    streak: tuple[tuple[float, tuple[float, float, float]], ...] = ()


@dataclass(frozen=True)
class ParticleGuideState:
    particles: tuple[Particle, ...]
    target: np.ndarray
    config: ParticleConfig
    rng: np.random.Generator = field(compare=False, repr=False, default=None)
    time: float = 0.0


def _unit(v: np.ndarray, fallback: np.ndarray | None = None) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        return fallback if fallback is not None else np.array([1.0, 0.0, 0.0])
    return v / n


def _uniform_in_sphere(rng: np.random.Generator, radius: float) -> np.ndarray:
    d = _unit(rng.standard_normal(3))
    return d * radius * rng.random() ** (1.0 / 3.0)


def _spawn_particle(
    head: Pose, target: np.ndarray, config: ParticleConfig, rng: np.random.Generator, t: float
) -> Particle:
    fx, fy = head.forward
    center = head.head + np.array([fx, fy, 0.0]) * config.respawn_forward
    pos = center + _uniform_in_sphere(rng, config.respawn_radius)
    vel = config.speed * _unit(target - pos)
    return Particle(pos, vel, 0.0, 0.0, ((t, tuple(pos)),))


def new_particle_state(
    head: Pose,
    target: Sequence[float],
    config: ParticleConfig | None = None,
    rng: np.random.Generator | None = None,
) -> ParticleGuideState:
    config = config or ParticleConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    tgt = np.asarray(target, dtype=np.float64)
    particles = tuple(_spawn_particle(head, tgt, config, rng, 0.0) for _ in range(config.count))
    return ParticleGuideState(particles, tgt, config, rng, 0.0)


def _diffuse_direction(
    v: np.ndarray, sigma_rad: float, rng: np.random.Generator
) -> np.ndarray:
    """Rotate v by a Gaussian angle about a random axis perpendicular to it."""
    vhat = _unit(v)
    n = rng.standard_normal(3)
    n = n - np.dot(n, vhat) * vhat
    n = _unit(n, fallback=np.array([0.0, 0.0, 1.0]))
    angle = sigma_rad * rng.standard_normal()
    c, s = math.cos(angle), math.sin(angle)
    rotated = vhat * c + np.cross(n, vhat) * s  # Rodrigues, axis orthogonal to v
    return rotated * float(np.linalg.norm(v))


def particle_step(
    state: ParticleGuideState,
    head: Pose,
    target: Sequence[float],
    dt: float,
) -> ParticleGuideState:
    """Integrate particles one tick; re-aim exactly at the target every second.

    Per-tick direction noise makes the drift organic, and the 1 s reset
    guarantees the swarm still converges; arrived or expired particles
    respawn just ahead of the walker's head.
    """
    if dt <= 0:
        raise GuidanceError(f"dt must be positive, got {dt}")
    cfg = state.config
    rng = state.rng
    tgt = np.asarray(target, dtype=np.float64)
    t = state.time + dt
    sigma_rad = math.radians(cfg.noise_deg_per_sqrt_s) * math.sqrt(dt)
    out: list[Particle] = []
    for p in state.particles:
        vel = p.velocity
        if cfg.noise_deg_per_sqrt_s > 0:
            vel = _diffuse_direction(vel, sigma_rad, rng)
        pos = p.position + vel * dt
        age = p.age + dt
        since = p.since_reset + dt
        if since >= PARTICLE_RESET_S:
            vel = cfg.speed * _unit(tgt - pos, fallback=_unit(vel))
            since = 0.0
        if float(np.linalg.norm(pos - tgt)) <= cfg.arrive_radius or age >= cfg.max_age_s:
            out.append(_spawn_particle(head, tgt, cfg, rng, t))
            continue
        streak = tuple(
            (ts, xyz) for ts, xyz in p.streak + ((t, tuple(pos)),) if t - ts <= cfg.streak_span_s
        )
        out.append(Particle(pos, vel, age, since, streak))
    return ParticleGuideState(tuple(out), tgt, cfg, rng, t)


# ---------------------------------------------------------------------------
# in-world arrow


@dataclass(frozen=True)
class ArrowGuideState:
    position: np.ndarray   # 40 cm above ground, 2 m along the gaze
    pointing: np.ndarray   # horizontal unit vector toward the target
    opacity: float


def arrow_pose(
    head: Pose,
    target: Sequence[float],
    performance_active: bool,
    dt: float,
    prev: ArrowGuideState | None = None,
) -> ArrowGuideState:
    """Place the arrow ahead of the walker and fade it during performances."""
    fx, fy = head.forward
    position = np.array([head.x + ARROW_DISTANCE * fx, head.y + ARROW_DISTANCE * fy, ARROW_HEIGHT])
    to_target = np.array([float(target[0]) - head.x, float(target[1]) - head.y, 0.0])
    pointing = _unit(to_target, fallback=np.array([fx, fy, 0.0]))
    opacity = 1.0 if prev is None else prev.opacity
    ramp = dt / ARROW_FADE_S
    opacity = max(0.0, opacity - ramp) if performance_active else min(1.0, opacity + ramp)
    return ArrowGuideState(position, pointing, opacity)


# ---------------------------------------------------------------------------
# on-screen radar and compass


@dataclass(frozen=True)
class RadarProjection:
    blips: tuple[tuple[float, float], ...]  # unit-disc coords, heading = +y
    fov_half_angle: float


def radar_project(
    head: Pose,
    targets: Sequence[Sequence[float]],
    range_m: float,
    fov_half_angle: float = math.radians(30.0),
) -> RadarProjection:
    """Forward-up radar: walker at the origin, heading mapped to +y."""
    if range_m <= 0:
        raise GuidanceError(f"range must be positive, got {range_m}")
    c, s = math.cos(head.heading), math.sin(head.heading)
    blips: list[tuple[float, float]] = []
    for tgt in targets:
        dx = float(tgt[0]) - head.x
        dy = float(tgt[1]) - head.y
        if math.hypot(dx, dy) > range_m:
            continue
        fwd = dx * c + dy * s           # along heading
        right = dx * s - dy * c         # 90 degrees clockwise from heading
        blips.append((right / range_m, fwd / range_m))
    return RadarProjection(tuple(blips), fov_half_angle)


@dataclass(frozen=True)
class CompassProjection:
    front: tuple[tuple[float, int], ...]  # (bearing offset deg, distance m)
    behind: tuple[float, ...]             # bearing offset deg only


def compass_project(head: Pose, targets: Sequence[Sequence[float]]) -> CompassProjection:
    """Split targets at the +/-90 degree bearing line; front keeps distances."""
    front: list[tuple[float, int]] = []
    behind: list[float] = []
    for tgt in targets:
        dx = float(tgt[0]) - head.x
        dy = float(tgt[1]) - head.y
        offset = math.degrees(wrap_angle(math.atan2(dy, dx) - head.heading))
        if abs(offset) <= 90.0:
            front.append((offset, int(round(math.hypot(dx, dy)))))
        else:
            behind.append(offset)
    return CompassProjection(tuple(front), tuple(behind))


# ---------------------------------------------------------------------------
# spatial audio cue


def audio_gain(listener: Sequence[float], source: Sequence[float]) -> float:
    """Inverse-distance gain, clamped to 1 within a meter of the source."""
    d = float(np.linalg.norm(np.asarray(source, dtype=np.float64) - np.asarray(listener, dtype=np.float64)))
    if d <= AUDIO_GAIN_CLAMP_M:
        return 1.0
    return 1.0 / d


# ---------------------------------------------------------------------------
# CSV trace interchange


@dataclass(frozen=True)
class GuidanceRecord:
    time: float
    kind: str   # "particle" | "arrow" | "radar" | "compass" | "audio"
    data: dict


def guidance_csv(records: Sequence[GuidanceRecord]) -> str:
    """time, aid kind, flattened JSON payload column."""
    lines = ["time,kind,data\n"]
    for r in records:
        payload = json.dumps(r.data, sort_keys=True).replace('"', '""')
        lines.append(f'{r.time!r},{r.kind},"{payload}"\n')
    return "".join(lines)


def guidance_from_csv(text: str) -> list[GuidanceRecord]:
    import csv as _csv
    import io as _io

    rows = list(_csv.reader(_io.StringIO(text)))
    out = []
    for row in rows[1:]:
        if not row:
            continue
        out.append(GuidanceRecord(float(row[0]), row[1], json.loads(row[2])))
    return out
