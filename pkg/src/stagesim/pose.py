"""Walker pose: planar position, yaw heading, and head height."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_HEAD_HEIGHT = 1.6  # m


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float  # radians CCW from +x
    head_height: float = DEFAULT_HEAD_HEIGHT

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def head(self) -> np.ndarray:
        return np.array([self.x, self.y, self.head_height])

    @property
    def forward(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi
