"""Training layouts for audience agents.

The default corridor mirrors the deployment venue at desk scale: a walled
hallway with three content zones spaced eight meters apart along the walking
path, a ticket-booth spawn area near one end, and an exit past the last zone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..geometry import OcclusionScene, SegmentMode, TraceGraph, build_scene
from ..stage import Circle, ContentZone, PerformanceClip, DEFAULT_ZONE_RADIUS

ZONE_SPACING_M = 8.0
CLIP_DURATION_S = 17.0  # performance length per zone, matches the staying cap
SPAWN_DISC_RADIUS_M = 1.5


@dataclass(frozen=True)
class CorridorLayout:
    scene: OcclusionScene
    zones: tuple[ContentZone, ...]
    spawn: tuple[float, float]        # ticket-booth point
    spawn_radius: float
    exit_point: tuple[float, float]
    exit_radius: float

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return self.scene.bounds


def _rect_walls(width: float, height: float) -> TraceGraph:
    pts = [(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)]
    joints = tuple(pts)
    segments = tuple((i, (i + 1) % 4, SegmentMode.WALL) for i in range(4))
    return TraceGraph(joints, segments)


def corridor_layout(
    length: float = 24.0,
    width: float = 6.0,
    zone_radius: float = DEFAULT_ZONE_RADIUS,
) -> CorridorLayout:
    """Hallway with three zones on the centerline, eight meters apart."""
    scene = build_scene(_rect_walls(length, width), wall_height=2.5)
    mid = width / 2
    first_x = length - 2.5 - 2 * ZONE_SPACING_M  # last zone sits 2.5 m from the end
    zones = tuple(
        ContentZone(
            f"zone-{i + 1}",
            (first_x + i * ZONE_SPACING_M, mid),
            Circle(zone_radius),
            PerformanceClip(f"clip-{i + 1}", CLIP_DURATION_S),
        )
        for i in range(3)
    )
    return CorridorLayout(
        scene=scene,
        zones=zones,
        spawn=(1.7, mid),
        spawn_radius=SPAWN_DISC_RADIUS_M,
        exit_point=(length - 1.0, mid),
        exit_radius=1.0,
    )


def point_segment_distance(px, py, ax, ay, bx, by) -> float:
    """Euclidean distance from point p to segment a-b."""
    vx, vy = bx - ax, by - ay
    wx, wy = px - ax, py - ay
    seg_len2 = vx * vx + vy * vy
    if seg_len2 <= 0.0:
        return math.hypot(wx, wy)
    t = max(0.0, min(1.0, (wx * vx + wy * vy) / seg_len2))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))
