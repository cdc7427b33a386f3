"""Timestamped pose streams produced by walkers and agents.

Every locomotion metric in the package consumes this type, and the harness
serializes it as CSV with a versioned header line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRACE_CSV_VERSION = 1
_TRACE_HEADER = f"# stagesim-trace v{TRACE_CSV_VERSION}\n"


class TraceError(Exception):
    pass


@dataclass(frozen=True)
class LocomotionTrace:
    """Ordered (t, position, heading) samples; timestamps strictly increase."""

    times: np.ndarray      # (T,)
    positions: np.ndarray  # (T, 2)
    headings: np.ndarray   # (T,)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        if t.ndim != 1:
            raise TraceError("times must be one-dimensional")
        if len(t) >= 2 and not np.all(np.diff(t) > 0):
            raise TraceError("timestamps must be strictly increasing")
        if len(self.positions) != len(t) or len(self.headings) != len(t):
            raise TraceError("times, positions, headings must have equal length")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def position_at(self, t: float) -> np.ndarray:
        """Linear interpolation within the trace span."""
        x = np.interp(t, self.times, self.positions[:, 0])
        y = np.interp(t, self.times, self.positions[:, 1])
        return np.array([x, y])


def trace_from_rows(rows) -> LocomotionTrace:
    """Build a trace from (t, x, y, heading) rows."""
    arr = np.asarray(list(rows), dtype=np.float64).reshape(-1, 4)
    return LocomotionTrace(arr[:, 0], arr[:, 1:3], arr[:, 3])


def trace_to_csv(trace: LocomotionTrace, extras: dict[str, np.ndarray] | None = None) -> str:
    """Versioned-header CSV; ``extras`` adds aligned columns (stage etc.)."""
    extras = extras or {}
    cols = ["t", "x", "y", "heading", *extras.keys()]
    lines = [_TRACE_HEADER, ",".join(cols) + "\n"]
    for i in range(len(trace)):
        row = [
            repr(float(trace.times[i])),
            repr(float(trace.positions[i, 0])),
            repr(float(trace.positions[i, 1])),
            repr(float(trace.headings[i])),
        ]
        for key in extras:
            v = extras[key][i]
            row.append(repr(float(v)) if isinstance(v, (int, float, np.floating)) else str(v))
        lines.append(",".join(row) + "\n")
    return "".join(lines)


def trace_from_csv(text: str) -> LocomotionTrace:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = []
    for ln in lines[1:]:  # skip the column header
        parts = ln.split(",")
        rows.append((float(parts[0]), float(parts[1]), float(parts[2]), float(parts[3])))
    return trace_from_rows(rows)
