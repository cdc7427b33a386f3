"""Corridor environment for audience-agent training.

Unicycle kinematics over the digital-twin corridor: continuous forward/turn
actions (plus a discrete idle-gesture channel), 12-ray wall sensing, sliding
wall collisions, and the paper-constant reward schedule. One env instance is
single-owner; parallel training uses independent instances with per-env RNG
substreams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..pose import wrap_angle
from ..rng import substream
from ..trace import LocomotionTrace
from .layout import CorridorLayout, corridor_layout
from .rewards import CONTACT_EPS, RewardConfig

MAX_SPEED_M_S = 1.4
MAX_TURN_RAD_S = math.radians(120.0)
N_RAYS = 12
RAY_RANGE_M = 10.0
STAY_NORM_S = 17.0
DEFAULT_DT = 0.1
DEFAULT_MAX_STEPS = 400


class EnvError(Exception):
    pass


class InvalidScene(EnvError):
    pass


class StepBeforeReset(EnvError):
    pass


@dataclass(frozen=True)
class AgentAction:
    forward: float       # [0, 1], scaled to 1.4 m/s
    turn: float          # [-1, 1], scaled to +/-120 deg/s
    gesture: int = 0     # idle-gesture id in {0..3}


def _ray_distances(
    edges: np.ndarray, origin: np.ndarray, dirs: np.ndarray, max_range: float
) -> np.ndarray:
    """Nearest-hit distance per direction, max_range when nothing is hit."""
    n_rays = len(dirs)
    if len(edges) == 0:
        return np.full(n_rays, max_range)
    p1 = edges[:, 0, :][:, None, :]                   # (E, 1, 2)
    s = (edges[:, 1, :] - edges[:, 0, :])[:, None, :]  # (E, 1, 2)
    d = dirs[None, :, :]                               # (1, R, 2)
    qp = p1 - origin[None, None, :]
    denom = d[..., 0] * s[..., 1] - d[..., 1] * s[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[..., 0] * s[..., 1] - qp[..., 1] * s[..., 0]) / denom
        u = (qp[..., 0] * d[..., 1] - qp[..., 1] * d[..., 0]) / denom
    ok = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    t = np.where(ok, t, np.inf)
    return np.minimum(t.min(axis=0), max_range)


def _edge_distances(edges: np.ndarray, x: float, y: float) -> np.ndarray:
    """Distance from (x, y) to each edge segment."""
    a = edges[:, 0, :]
    b = edges[:, 1, :]
    v = b - a
    w = np.array([x, y]) - a
    len2 = (v * v).sum(axis=1)
    t = np.clip(np.divide(
        (w * v).sum(axis=1), len2, out=np.zeros_like(len2), where=len2 > 0
    ), 0.0, 1.0)
    closest = a + t[:, None] * v
    return np.hypot(x - closest[:, 0], y - closest[:, 1]), closest


class AudienceEnv:
    """Single-agent corridor environment with the paper reward schedule."""

    def __init__(
        self,
        layout: CorridorLayout | None = None,
        reward_config: RewardConfig | None = None,
        dt: float = DEFAULT_DT,
        max_steps: int = DEFAULT_MAX_STEPS,
        seed: int = 0,
    ):
        self.layout = layout or corridor_layout()
        if len(self.layout.scene.wall_edges) == 0:
            raise InvalidScene("layout scene has no walls")
        self.reward_config = reward_config or RewardConfig()
        self.dt = dt
        self.max_steps = max_steps
        self._rng = substream(seed, "audience-env")
        self._zone_xy = np.array([z.center for z in self.layout.zones])
        self._zone_r = np.array([z.shape.radius for z in self.layout.zones])
        minx, miny, maxx, maxy = self.layout.bounds
        self._diag = math.hypot(maxx - minx, maxy - miny)
        self._ready = False

    @property
    def observation_dim(self) -> int:
        return 2 + 2 + N_RAYS + 3 * len(self.layout.zones) + 2

    # -- lifecycle -----------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Spawn inside the ticket-booth disc with cleared zone state."""
        if seed is not None:
            self._rng = substream(seed, "audience-env")
        bx, by = self.layout.spawn
        for _ in range(128):
            r = self.layout.spawn_radius * math.sqrt(self._rng.random())
            ang = self._rng.uniform(0.0, 2.0 * math.pi)
            x, y = bx + r * math.cos(ang), by + r * math.sin(ang)
            dists, _ = _edge_distances(self.layout.scene.wall_edges, x, y)
            if dists.min() > self.reward_config.agent_radius_m and self._inside_bounds(x, y):
                break
        else:
            raise InvalidScene("could not find a clear spawn near the ticket booth")
        self.x, self.y = x, y
        self.heading = self._rng.uniform(-math.pi, math.pi)
        n = len(self.layout.zones)
        self.visited = np.zeros(n, dtype=bool)
        self.stayed = np.zeros(n)
        self.bonus_given = False
        self.steps = 0
        self.cumulative_reward = 0.0
        self._ready = True
        return self.observe()

    def _inside_bounds(self, x: float, y: float) -> bool:
        minx, miny, maxx, maxy = self.layout.bounds
        return minx < x < maxx and miny < y < maxy

    def step(self, action: AgentAction, dt: float | None = None):
        """Advance one tick; returns (observation, reward, done)."""
        if not self._ready:
            raise StepBeforeReset("call reset() before step()")
        dt = self.dt if dt is None else dt
        forward = min(1.0, max(0.0, float(action.forward)))
        turn = min(1.0, max(-1.0, float(action.turn)))
        self.heading = wrap_angle(self.heading + turn * MAX_TURN_RAD_S * dt)
        nx = self.x + forward * MAX_SPEED_M_S * dt * math.cos(self.heading)
        ny = self.y + forward * MAX_SPEED_M_S * dt * math.sin(self.heading)
        nx, ny = self._resolve_collision(nx, ny)
        self.x, self.y = nx, ny
        self.steps += 1
        reward = self._step_reward(nx, ny, dt)
        self.cumulative_reward += reward
        done = bool(
            (self.visited.all() and self._near_exit(nx, ny)) or self.steps >= self.max_steps
        )
        return self.observe(), reward, done

    def _near_exit(self, x: float, y: float) -> bool:
        ex, ey = self.layout.exit_point
        return math.hypot(x - ex, y - ey) <= self.layout.exit_radius

    def _resolve_collision(self, x: float, y: float) -> tuple[float, float]:
        """Push the agent disc out of any penetrated wall edge (slide)."""
        r = self.reward_config.agent_radius_m
        edges = self.layout.scene.wall_edges
        for _ in range(3):
            dists, closest = _edge_distances(edges, x, y)
            k = int(np.argmin(dists))
            d = float(dists[k])
            if d >= r:
                break
            cx, cy = closest[k]
            if d > 1e-12:
                nxv, nyv = (x - cx) / d, (y - cy) / d
            else:
                ex, ey = edges[k, 1] - edges[k, 0]
                norm = math.hypot(ex, ey)
                nxv, nyv = -ey / norm, ex / norm
                if not self._inside_bounds(x + nxv * r, y + nyv * r):
                    nxv, nyv = -nxv, -nyv
            x, y = cx + nxv * r, cy + nyv * r
        return x, y

    # -- reward (independent accounting; must match the trace oracle) --------

    def _step_reward(self, x: float, y: float, dt: float) -> float:
        cfg = self.reward_config
        reward = 0.0
        dz = np.hypot(self._zone_xy[:, 0] - x, self._zone_xy[:, 1] - y)
        inside_mask = dz <= self._zone_r
        inside = int(np.argmax(inside_mask)) if inside_mask.any() else -1
        if inside >= 0 and not self.visited[inside]:
            ordinal = int(self.visited.sum())
            self.visited[inside] = True
            if ordinal < len(cfg.zone_entry):
                reward += cfg.zone_entry[ordinal]
        if not self.bonus_given and self.visited.all():
            self.bonus_given = True
            reward += cfg.all_zones_bonus
        if inside >= 0 and self.stayed[inside] < cfg.staying_cap_s:
            credit = min(dt, cfg.staying_cap_s - float(self.stayed[inside]))
            self.stayed[inside] += credit
            reward += cfg.staying_rate * credit
        if not self.visited.all():
            nearest = float(dz[~self.visited].min())
            if nearest <= cfg.proximity_radius_m:
                reward += cfg.proximity_rate * dt
        wall_d, _ = _edge_distances(self.layout.scene.wall_edges, x, y)
        if float(wall_d.min()) <= cfg.agent_radius_m + CONTACT_EPS:
            reward += cfg.wall_contact_rate * dt
        return reward

    # -- observation ----------------------------------------------------------

    def observe(self) -> np.ndarray:
        """Normalized observation vector; every component lies in [-1, 1]."""
        minx, miny, maxx, maxy = self.layout.bounds
        px = 2.0 * (self.x - minx) / (maxx - minx) - 1.0
        py = 2.0 * (self.y - miny) / (maxy - miny) - 1.0
        angles = self.heading + np.arange(N_RAYS) * (2.0 * math.pi / N_RAYS)
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
        rays = _ray_distances(
            self.layout.scene.wall_edges, np.array([self.x, self.y]), dirs, RAY_RANGE_M
        ) / RAY_RANGE_M
        parts = [
            np.array([px, py, math.sin(self.heading), math.cos(self.heading)]),
            rays,
        ]
        stay_norm = 0.0
        for i, zone in enumerate(self.layout.zones):
            cx, cy = zone.center
            rel = np.clip(
                np.array([(cx - self.x) / self._diag, (cy - self.y) / self._diag]), -1.0, 1.0
            )
            parts.append(rel)
            parts.append(np.array([1.0 if self.visited[i] else 0.0]))
            if math.hypot(cx - self.x, cy - self.y) <= zone.shape.radius:
                stay_norm = min(1.0, float(self.stayed[i]) / STAY_NORM_S)
        parts.append(np.array([stay_norm, 1.0 if self.visited.all() else 0.0]))
        return np.concatenate(parts)

    # -- demo replay ----------------------------------------------------------

    def replay(self, trace: LocomotionTrace):
        """Reconstruct (observation, action) pairs from a pose trace.

        Actions come from finite differences of consecutive poses, clamped to
        the kinematic limits; gestures default to 0 since traces carry none.
        """
        n = len(trace)
        if n < 2:
            raise EnvError("trace too short to reconstruct demonstrations")
        obs_rows = []
        cont_rows = []
        disc_rows = []
        saved = self._snapshot()
        try:
            self._ready = True
            self.visited = np.zeros(len(self.layout.zones), dtype=bool)
            self.stayed = np.zeros(len(self.layout.zones))
            self.bonus_given = False
            self.steps = 0
            self.cumulative_reward = 0.0
            self.x = float(trace.positions[0, 0])
            self.y = float(trace.positions[0, 1])
            self.heading = float(trace.headings[0])
            for i in range(n - 1):
                obs_rows.append(self.observe())
                dt = float(trace.times[i + 1] - trace.times[i])
                h_next = float(trace.headings[i + 1])
                turn = wrap_angle(h_next - self.heading) / (MAX_TURN_RAD_S * dt)
                disp = trace.positions[i + 1] - trace.positions[i]
                along = disp[0] * math.cos(h_next) + disp[1] * math.sin(h_next)
                fwd = along / (MAX_SPEED_M_S * dt)
                cont_rows.append([min(1.0, max(0.0, fwd)), min(1.0, max(-1.0, turn))])
                disc_rows.append(0)
                self.x = float(trace.positions[i + 1, 0])
                self.y = float(trace.positions[i + 1, 1])
                self.heading = h_next
                self._mark_zones(self.x, self.y, dt)
        finally:
            self._restore(saved)
        return np.asarray(obs_rows), np.asarray(cont_rows), np.asarray(disc_rows, dtype=np.intp)

    def _mark_zones(self, x: float, y: float, dt: float) -> None:
        dz = np.hypot(self._zone_xy[:, 0] - x, self._zone_xy[:, 1] - y)
        inside_mask = dz <= self._zone_r
        if inside_mask.any():
            i = int(np.argmax(inside_mask))
            self.visited[i] = True
            self.stayed[i] = min(self.reward_config.staying_cap_s, self.stayed[i] + dt)

    def _snapshot(self):
        keys = ("x", "y", "heading", "visited", "stayed", "bonus_given", "steps",
                "cumulative_reward", "_ready")
        return {k: getattr(self, k, None) for k in keys}

    def _restore(self, saved) -> None:
        for k, v in saved.items():
            if v is not None or k == "_ready":
                setattr(self, k, v)
