"""Simulated walkers standing in for headset-wearing humans.

Waypoint walkers follow a scripted polyline with optional dwell times;
wander walkers diffuse randomly while respecting walls; guided walkers chase
the current guidance target at a bounded turn rate; policy walkers replay a
trained audience agent.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..geometry import OcclusionScene, point_in_walkable, _segments_cross
from ..pose import Pose, wrap_angle

DEFAULT_SPEED = 1.4  # m/s, normal walking pace
GUIDED_TURN_RATE = math.radians(120.0)


class WalkerError(Exception):
    pass


class WaypointWalker:
    """Moves along scripted points at constant speed, dwelling where told."""

    def __init__(
        self,
        points: Sequence[Sequence[float]],
        speed: float = DEFAULT_SPEED,
        dwell: Sequence[float] | None = None,
    ):
        if not points:
            raise WalkerError("waypoint walker needs at least one point")
        if not 0 < speed <= 3.0:
            raise WalkerError(f"speed must be in (0, 3], got {speed}")
        self.points = [(float(p[0]), float(p[1])) for p in points]
        self.speed = speed
        self.dwell = list(dwell) if dwell is not None else [0.0] * len(self.points)
        if len(self.dwell) != len(self.points):
            raise WalkerError("dwell list must match points")
        self.x, self.y = self.points[0]
        self.heading = 0.0
        self._target_idx = 0
        self._dwell_left = self.dwell[0]

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.heading)

    @property
    def finished(self) -> bool:
        return self._target_idx >= len(self.points) - 1 and self._dwell_left <= 0

    def step(self, dt: float) -> Pose:
        if self._dwell_left > 0:
            self._dwell_left -= dt
            return self.pose
        if self._target_idx >= len(self.points) - 1:
            return self.pose
        tx, ty = self.points[self._target_idx + 1]
        dx, dy = tx - self.x, ty - self.y
        dist = math.hypot(dx, dy)
        step_len = self.speed * dt
        if dist <= step_len:
            self.x, self.y = tx, ty
            self._target_idx += 1
            self._dwell_left = self.dwell[self._target_idx]
        else:
            self.heading = math.atan2(dy, dx)
            self.x += step_len * math.cos(self.heading)
            self.y += step_len * math.sin(self.heading)
        return self.pose


class WanderWalker:
    """Heading-diffusion random walk that refuses to cross walls."""

    def __init__(
        self,
        start: Sequence[float],
        speed: float = DEFAULT_SPEED,
        turn_noise: float = 1.5,  # rad/sqrt(s) heading diffusion
        rng: np.random.Generator | None = None,
        scene: OcclusionScene | None = None,
    ):
        if not 0 < speed <= 3.0:
            raise WalkerError(f"speed must be in (0, 3], got {speed}")
        self.x, self.y = float(start[0]), float(start[1])
        self.speed = speed
        self.turn_noise = turn_noise
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.scene = scene
        self.heading = float(self.rng.uniform(-math.pi, math.pi))

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.heading)

    def _blocked(self, nx: float, ny: float) -> bool:
        if self.scene is None:
            return False
        a = np.array([self.x, self.y])
        b = np.array([nx, ny])
        if not point_in_walkable(self.scene, (nx, ny)):
            return True
        return _segments_cross(self.scene.wall_edges, a, b)

    def step(self, dt: float) -> Pose:
        self.heading = wrap_angle(
            self.heading + self.turn_noise * math.sqrt(dt) * self.rng.standard_normal()
        )
        step_len = self.speed * dt
        for _ in range(12):
            nx = self.x + step_len * math.cos(self.heading)
            ny = self.y + step_len * math.sin(self.heading)
            if not self._blocked(nx, ny):
                self.x, self.y = nx, ny
                break
            self.heading = float(self.rng.uniform(-math.pi, math.pi))
        return self.pose


def guided_walker_step(
    pose: Pose,
    target: Sequence[float],
    speed: float,
    dt: float,
    turn_rate: float = GUIDED_TURN_RATE,
    hold: bool = False,
) -> Pose:
    """One tick of a walker that follows the guidance aid.

    Turns toward the target bearing at a bounded rate and advances at the
    given speed; ``hold`` freezes it (used while watching a performance
    inside the active zone).
    """
    if hold:
        return pose
    desired = math.atan2(float(target[1]) - pose.y, float(target[0]) - pose.x)
    err = wrap_angle(desired - pose.heading)
    max_turn = turn_rate * dt
    heading = wrap_angle(pose.heading + max(-max_turn, min(max_turn, err)))
    x = pose.x + speed * dt * math.cos(heading)
    y = pose.y + speed * dt * math.sin(heading)
    return Pose(x, y, heading, pose.head_height)


class GuidedWalker:
    """Stateful wrapper over guided_walker_step."""

    def __init__(self, start: Sequence[float], speed: float = DEFAULT_SPEED):
        if not 0 < speed <= 3.0:
            raise WalkerError(f"speed must be in (0, 3], got {speed}")
        self._pose = Pose(float(start[0]), float(start[1]), 0.0)
        self.speed = speed

    @property
    def pose(self) -> Pose:
        return self._pose

    def step(self, dt: float, target: Sequence[float], hold: bool = False) -> Pose:
        self._pose = guided_walker_step(self._pose, target, self.speed, dt, hold=hold)
        return self._pose
