"""Audience-agent reward schedule and its trace oracle.

The schedule rewards entering content zones by entry ordinal (48.2, 63.7,
85.5), a 41.0 bonus for completing all three, staying inside a zone for up to
17 seconds each, approaching the nearest unvisited zone (+0.03/s inside a 4 m
band), and penalizes wall contact at -0.01/s.

``episode_reward_oracle`` accumulates every term directly from a locomotion
trace. It deliberately shares no code with the environment stepper: the env's
cumulative reward must agree with this independent accounting to 1e-6 on any
trace, which is the central correctness check for the reward system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..trace import LocomotionTrace
from .layout import CorridorLayout, point_segment_distance

# reward accounting evaluates poses just off wall surfaces; this margin keeps
# the contact test stable against float noise after collision push-out
CONTACT_EPS = 1e-9


@dataclass(frozen=True)
class RewardConfig:
    zone_entry: tuple[float, ...] = (48.2, 63.7, 85.5)  # by entry ordinal
    all_zones_bonus: float = 41.0
    staying_rate: float = 1.0        # per second inside a zone
    staying_cap_s: float = 17.0      # per zone
    proximity_rate: float = 0.03     # per second near an unvisited zone
    proximity_radius_m: float = 4.0
    wall_contact_rate: float = -0.01  # per second of wall contact
    agent_radius_m: float = 0.3

    def __post_init__(self):
        if list(self.zone_entry) != sorted(self.zone_entry):
            raise ValueError("zone entry rewards must be nondecreasing by ordinal")
        if self.staying_cap_s <= 0:
            raise ValueError("staying cap must be positive")


def episode_reward_oracle(
    trace: LocomotionTrace,
    layout: CorridorLayout,
    config: RewardConfig | None = None,
) -> float:
    """Total reward earned along a trace, computed without the env stepper.

    Sample 0 is the reset pose and earns nothing; each later sample is scored
    over the interval since its predecessor, mirroring one env step landing
    on that pose. Entry bonuses key off the entry ordinal, the all-zones
    bonus pays once, per-zone staying credit saturates at the cap, proximity
    pays near the closest still-unvisited zone, and wall contact means the
    agent disc overlaps a wall edge.
    """
    cfg = config or RewardConfig()
    n = len(layout.zones)
    visited = [False] * n
    stayed = [0.0] * n
    bonus_given = False
    total = 0.0
    times = trace.times
    for i in range(1, len(trace)):
        dt = float(times[i] - times[i - 1])
        x = float(trace.positions[i, 0])
        y = float(trace.positions[i, 1])

        inside = -1
        for z, zone in enumerate(layout.zones):
            if zone.contains((x, y)):
                inside = z
                break  # zones are at least 2 m apart: one containment at most
        if inside >= 0 and not visited[inside]:
            ordinal = sum(visited)
            visited[inside] = True
            if ordinal < len(cfg.zone_entry):
                total += cfg.zone_entry[ordinal]
        if not bonus_given and all(visited):
            bonus_given = True
            total += cfg.all_zones_bonus
        if inside >= 0 and stayed[inside] < cfg.staying_cap_s:
            credit = min(dt, cfg.staying_cap_s - stayed[inside])
            stayed[inside] += credit
            total += cfg.staying_rate * credit
        nearest = math.inf
        for z, zone in enumerate(layout.zones):
            if not visited[z]:
                cx, cy = zone.center
                nearest = min(nearest, math.hypot(cx - x, cy - y))
        if nearest <= cfg.proximity_radius_m:
            total += cfg.proximity_rate * dt
        if _wall_distance(layout, x, y) <= cfg.agent_radius_m + CONTACT_EPS:
            total += cfg.wall_contact_rate * dt
    return total


def _wall_distance(layout: CorridorLayout, x: float, y: float) -> float:
    edges = layout.scene.wall_edges
    if len(edges) == 0:
        return math.inf
    return min(
        point_segment_distance(x, y, e[0, 0], e[0, 1], e[1, 0], e[1, 1]) for e in edges
    )
