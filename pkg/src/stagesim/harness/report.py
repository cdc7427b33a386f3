"""Bundle reports: summary JSON plus deterministic SVG plots.

Reports are derived purely from the files already in the bundle, so the
``report`` CLI subcommand can regenerate them and a self-consistency test can
recompute every total from the raw traces.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .. import stage as stg
from ..trace import trace_from_csv

PLOT_W = 640
PLOT_H = 360
_MARGIN = 46
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


class IncompleteBundle(Exception):
    pass


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def line_plot_svg(series, title: str, x_label: str = "", y_label: str = "") -> str:
    """Minimal multi-series line plot; byte-stable for identical inputs."""
    xs = [p[0] for _, pts in series for p in pts]
    ys = [p[1] for _, pts in series for p in pts]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 - x0 < 1e-12:
        x1 = x0 + 1.0
    if y1 - y0 < 1e-12:
        y1 = y0 + 1.0

    def sx(x):
        return _MARGIN + (x - x0) / (x1 - x0) * (PLOT_W - 2 * _MARGIN)

    def sy(y):
        return PLOT_H - _MARGIN - (y - y0) / (y1 - y0) * (PLOT_H - 2 * _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_W}" height="{PLOT_H}">',
        f'<rect width="{PLOT_W}" height="{PLOT_H}" fill="white"/>',
        f'<text x="{PLOT_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_MARGIN}" y1="{PLOT_H - _MARGIN}" x2="{PLOT_W - _MARGIN}" '
        f'y2="{PLOT_H - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{PLOT_H - _MARGIN}" stroke="black"/>',
        f'<text x="{PLOT_W // 2}" y="{PLOT_H - 10}" text-anchor="middle" font-size="11">{x_label}</text>',
        f'<text x="14" y="{PLOT_H // 2}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 14 {PLOT_H // 2})">{y_label}</text>',
        f'<text x="{_MARGIN}" y="{PLOT_H - _MARGIN + 14}" font-size="10">{_fmt(x0)}</text>',
        f'<text x="{PLOT_W - _MARGIN}" y="{PLOT_H - _MARGIN + 14}" text-anchor="end" '
        f'font-size="10">{_fmt(x1)}</text>',
        f'<text x="{_MARGIN - 4}" y="{PLOT_H - _MARGIN}" text-anchor="end" font-size="10">{_fmt(y0)}</text>',
        f'<text x="{_MARGIN - 4}" y="{_MARGIN + 4}" text-anchor="end" font-size="10">{_fmt(y1)}</text>',
    ]
    for i, (name, pts) in enumerate(series):
        if not pts:
            continue
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{PLOT_W - _MARGIN}" y="{_MARGIN + 14 * i}" text-anchor="end" '
            f'font-size="11" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(bundle_dir: str | Path) -> dict:
    """(Re)build report.json and plots/ from the bundle's raw artifacts."""
    bundle_dir = Path(bundle_dir)
    config_path = bundle_dir / "config.json"
    if not config_path.exists():
        raise IncompleteBundle(f"{bundle_dir} has no config.json")
    config = json.loads(config_path.read_text())
    kind = config.get("kind")
    builder = {
        "theater": _report_theater,
        "distortion": _report_distortion,
        "bubbles": _report_bubbles,
        "rollout": _report_rollout,
        "train": _report_train,
    }.get(kind)
    if builder is None:
        raise IncompleteBundle(f"cannot report on scenario kind {kind!r}")
    report, plots = builder(bundle_dir)
    report["kind"] = kind
    (bundle_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    plot_dir = bundle_dir / "plots"
    plot_dir.mkdir(exist_ok=True)
    for name, svg in plots.items():
        (plot_dir / name).write_text(svg)
    return report


def _read_trace(bundle_dir: Path):
    path = bundle_dir / "trace.csv"
    if not path.exists():
        raise IncompleteBundle("trace.csv missing")
    return trace_from_csv(path.read_text())


def _walked_distance(trace) -> float:
    if len(trace) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(trace.positions, axis=0), axis=1)))


def _report_theater(bundle_dir: Path):
    trace = _read_trace(bundle_dir)
    events_path = bundle_dir / "events.jsonl"
    if not events_path.exists():
        raise IncompleteBundle("events.jsonl missing")
    events = stg.events_from_jsonl(events_path.read_text())
    counts: dict[str, int] = {}
    for ev in events:
        counts[ev.kind.value] = counts.get(ev.kind.value, 0) + 1
    rows = [(t, x, y) for t, (x, y) in zip(trace.times, trace.positions)]
    timing = stg.stage_timing_report(events, [(t, x, y) for t, x, y in rows])
    report = {
        "event_counts": counts,
        "stage_durations": list(timing.stage_durations),
        "visit_orders": [list(v) for v in timing.visit_orders],
        "total_distance": timing.total_distance if timing.total_distance is not None else 0.0,
        "samples": len(trace),
    }
    dist_series = _target_dist_series(bundle_dir)
    plots = {
        "path.svg": line_plot_svg(
            [("walker", [(float(x), float(y)) for x, y in trace.positions])],
            "walker path", "x (m)", "y (m)",
        ),
        "target_distance.svg": line_plot_svg(
            [("distance", dist_series)], "distance to guidance target", "t (s)", "m"
        ),
    }
    return report, plots


def _target_dist_series(bundle_dir: Path):
    path = bundle_dir / "trace.csv"
    series = []
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    if "target_dist" in header:
        i_t = header.index("t")
        i_d = header.index("target_dist")
        for ln in lines[1:]:
            parts = ln.split(",")
            series.append((float(parts[i_t]), float(parts[i_d])))
    return series


def _report_distortion(bundle_dir: Path):
    trace = _read_trace(bundle_dir)
    metrics_path = bundle_dir / "metrics.csv"
    if not metrics_path.exists():
        raise IncompleteBundle("metrics.csv missing")
    segments = []
    lines = metrics_path.read_text().splitlines()
    for ln in lines[1:]:
        if not ln:
            continue
        label, phase, w0, w1, axis_m, center_m = ln.split(",")
        segments.append(
            {
                "trace": label,
                "phase": phase,
                "window": [float(w0), float(w1)],
                "axis_movement": float(axis_m),
                "center_distance_change": float(center_m),
            }
        )
    report = {
        "segments": segments,
        "total_walking_distance": _walked_distance(trace),
        "samples": len(trace),
    }
    axis_pts = [(i, s["axis_movement"]) for i, s in enumerate(segments)]
    center_pts = [(i, s["center_distance_change"]) for i, s in enumerate(segments)]
    plots = {
        "segment_metrics.svg": line_plot_svg(
            [("axis", axis_pts), ("center", center_pts)],
            "per-segment locomotion metrics", "segment", "m",
        ),
        "path.svg": line_plot_svg(
            [("walker", [(float(x), float(y)) for x, y in trace.positions])],
            "walker path", "x (m)", "y (m)",
        ),
    }
    return report, plots


def _report_bubbles(bundle_dir: Path):
    trace = _read_trace(bundle_dir)
    notes_path = bundle_dir / "notes.jsonl"
    if not notes_path.exists():
        raise IncompleteBundle("notes.jsonl missing")
    ons = 0
    offs = 0
    per_chord: dict[str, int] = {}
    cumulative = [(0.0, 0.0)]
    for ln in notes_path.read_text().splitlines():
        if not ln.strip():
            continue
        doc = json.loads(ln)
        if doc["kind"] == "on":
            ons += 1
            per_chord[doc["chord"]] = per_chord.get(doc["chord"], 0) + 1
            cumulative.append((float(doc["time"]), float(ons)))
        else:
            offs += 1
    report = {
        "note_on_count": ons,
        "note_off_count": offs,
        "per_chord_on": dict(sorted(per_chord.items())),
        "total_distance": _walked_distance(trace),
        "samples": len(trace),
    }
    plots = {
        "notes.svg": line_plot_svg(
            [("note-ons", cumulative)], "cumulative note-on events", "t (s)", "count"
        )
    }
    return report, plots


def _report_rollout(bundle_dir: Path):
    path = bundle_dir / "rollout.csv"
    if not path.exists():
        raise IncompleteBundle("rollout.csv missing")
    zones = []
    rewards = []
    for ln in path.read_text().splitlines()[1:]:
        if not ln:
            continue
        parts = ln.split(",")
        zones.append(int(parts[2]))
        rewards.append(float(parts[3]))
    report = {
        "episodes": len(zones),
        "zones_entered": zones,
        "mean_zones_entered": float(np.mean(zones)) if zones else 0.0,
        "mean_total_reward": float(np.mean(rewards)) if rewards else 0.0,
    }
    plots = {
        "zones.svg": line_plot_svg(
            [("zones", [(i, z) for i, z in enumerate(zones)])],
            "zones entered per episode", "episode", "zones",
        )
    }
    return report, plots


def _report_train(bundle_dir: Path):
    path = bundle_dir / "train_stats.csv"
    if not path.exists():
        raise IncompleteBundle("train_stats.csv missing")
    lines = [ln for ln in path.read_text().splitlines() if ln]
    header = lines[0].split(",") if lines else []
    rows = [dict(zip(header, ln.split(","))) for ln in lines[1:]]
    rewards = [(float(r["steps"]), float(r["mean_reward"])) for r in rows]
    zones = [(float(r["steps"]), float(r["mean_zones_entered"])) for r in rows]
    report = {
        "iterations": len(rows),
        "final_mean_reward": rewards[-1][1] if rewards else 0.0,
        "final_mean_zones_entered": zones[-1][1] if zones else 0.0,
        "total_steps": int(float(rows[-1]["steps"])) if rows else 0,
    }
    plots = {
        "reward.svg": line_plot_svg([("mean reward", rewards)], "training reward", "steps", "reward"),
        "zones.svg": line_plot_svg([("zones", zones)], "zones entered", "steps", "zones"),
    }
    return report, plots
