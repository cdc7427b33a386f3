"""Scenario configs and the deterministic scenario runner.

A scenario JSON names a kind (theater, distortion, bubbles, rollout, train),
a seed, a tick size, and kind-specific sections. The runner executes it
headlessly and writes an artifact bundle: traces, event logs, metrics,
reports, plots, and a manifest of content hashes. Identical config plus seed
yields byte-identical bundles.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import bubbles as bub
from .. import distortion as dist
from .. import guidance as gd
from .. import stage as stg
from ..agents import (
    AgentAction,
    AudienceEnv,
    PolicyNetwork,
    TrainingRun,
    bc_train,
    expert_demonstrations,
    load_policy,
    ppo_train,
    rollout,
    save_policy,
    training_stats_csv,
)
from ..agents.layout import corridor_layout
from ..geometry import (
    OcclusionScene,
    SegmentMode,
    TraceGraph,
    build_scene,
    export_obj,
    scene_from_json,
    scene_to_json,
)
from ..pose import Pose
from ..rng import substream
from ..trace import LocomotionTrace, trace_to_csv
from .walkers import GuidedWalker, WanderWalker, WaypointWalker
from . import report as report_mod

CONFIG_VERSION = 1
SCENARIO_KINDS = ("theater", "distortion", "bubbles", "rollout", "train")


class ConfigError(Exception):
    pass


class SceneLoadError(Exception):
    pass


# ---------------------------------------------------------------------------
# built-in scenes and cue sheets


def _rect_graph(minx: float, miny: float, maxx: float, maxy: float) -> TraceGraph:
    joints = ((minx, miny), (maxx, miny), (maxx, maxy), (minx, maxy))
    segments = tuple((i, (i + 1) % 4, SegmentMode.WALL) for i in range(4))
    return TraceGraph(joints, segments)


def builtin_scene(name: str) -> OcclusionScene:
    if name == "corridor":
        return build_scene(_rect_graph(0.0, 0.0, 24.0, 6.0), wall_height=2.5)
    if name == "room":
        return build_scene(_rect_graph(0.0, 0.0, 4.5, 5.5), wall_height=2.5)
    if name == "orchestra":
        half = bub.FENCE_SIDE_M / 2
        return build_scene(_rect_graph(-half, -half, half, half), wall_height=2.5)
    raise SceneLoadError(f"unknown builtin scene {name!r}")


_THEMES = ("Future", "Fantasy", "Forest")
_THEME_GUIDANCE = (stg.GuidanceMode.PARTICLE, stg.GuidanceMode.ARROW, stg.GuidanceMode.NONE)
_CORRIDOR_ZONE_X = (5.5, 13.5, 21.5)
_CORRIDOR_MID_Y = 3.0
_CORRIDOR_SPIRAL = (23.0, 3.0)
_CORRIDOR_CLIP_S = 28.0


def builtin_cue_sheet(name: str) -> stg.CueSheet:
    """Three themed stages over the corridor, three zones each."""
    if name != "corridor-three-stage":
        raise ConfigError(f"unknown builtin cue sheet {name!r}")
    stages = []
    for k, theme in enumerate(_THEMES):
        zones = tuple(
            stg.ContentZone(
                f"{theme.lower()}-{i + 1}",
                (x, _CORRIDOR_MID_Y),
                stg.Circle(stg.DEFAULT_ZONE_RADIUS),
                stg.PerformanceClip(f"{theme.lower()}-clip-{i + 1}", _CORRIDOR_CLIP_S),
            )
            for i, x in enumerate(_CORRIDOR_ZONE_X)
        )
        stages.append(stg.Stage(theme, zones, _THEME_GUIDANCE[k], _CORRIDOR_SPIRAL))
    return stg.CueSheet(tuple(stages))


def corridor_waypoint_script(sheet: stg.CueSheet, start=(1.5, 3.0)) -> tuple[list, list]:
    """Waypoints visiting each stage's zones in order, dwelling one clip each."""
    points = [tuple(start)]
    dwell = [0.0]
    for stage in sheet.stages:
        for zone in stage.zones:
            points.append(zone.center)
            dwell.append(zone.clip.duration)
        points.append(stage.spiral)
        dwell.append(0.0)
    return points, dwell


# ---------------------------------------------------------------------------
# config parsing


def _check_keys(doc: dict, allowed: set[str], context: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {context} fields: {sorted(unknown)}")


def _require(doc: dict, key: str, context: str):
    if key not in doc:
        raise ConfigError(f"missing {context} field {key!r}")
    return doc[key]


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    seed: int
    dt: float
    duration: float | None
    doc: dict
    base_dir: Path

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.parse(doc, base_dir=path.parent)

    @classmethod
    def parse(cls, doc: dict, base_dir: str | Path = ".") -> "ScenarioConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        _check_keys(
            doc,
            {
                "version", "kind", "seed", "dt", "duration", "scene", "cue_sheet",
                "walker", "treatment", "timeline", "room", "bubbles", "rollout", "train",
            },
            "config",
        )
        if doc.get("version") != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version: {doc.get('version')}")
        kind = _require(doc, "kind", "config")
        if kind not in SCENARIO_KINDS:
            raise ConfigError(f"unknown scenario kind {kind!r}")
        seed = _require(doc, "seed", "config")
        dt = _require(doc, "dt", "config")
        if not isinstance(seed, int):
            raise ConfigError("seed must be an integer")
        if not (isinstance(dt, (int, float)) and dt > 0):
            raise ConfigError("dt must be a positive number")
        duration = doc.get("duration")
        if kind in ("theater", "distortion", "bubbles"):
            if not (isinstance(duration, (int, float)) and duration > 0):
                raise ConfigError(f"{kind} scenarios need a positive duration")
        if "walker" in doc:
            _check_keys(
                doc["walker"],
                {"kind", "points", "dwell", "speed", "turn_noise", "start", "checkpoint"},
                "walker",
            )
        if "scene" in doc:
            _check_keys(doc["scene"], {"builtin", "path"}, "scene")
        return cls(kind, int(seed), float(dt), duration, doc, Path(base_dir))


def _load_scene(config: ScenarioConfig, default_builtin: str) -> OcclusionScene:
    spec = config.doc.get("scene", {"builtin": default_builtin})
    if "builtin" in spec:
        return builtin_scene(spec["builtin"])
    path = config.base_dir / spec["path"]
    if not path.exists():
        raise SceneLoadError(f"scene file not found: {path}")
    try:
        return scene_from_json(path.read_text())
    except Exception as exc:
        raise SceneLoadError(f"could not load scene {path}: {exc}") from exc


def _load_cue_sheet(config: ScenarioConfig) -> stg.CueSheet:
    spec = config.doc.get("cue_sheet", {"builtin": "corridor-three-stage"})
    if "builtin" in spec:
        return builtin_cue_sheet(spec["builtin"])
    path = config.base_dir / spec["path"]
    if not path.exists():
        raise SceneLoadError(f"cue sheet file not found: {path}")
    return stg.cue_sheet_from_json(path.read_text())


def _build_walker(config: ScenarioConfig, scene: OcclusionScene | None, sheet=None):
    spec = config.doc.get("walker")
    if spec is None:
        if config.kind == "theater":
            sheet = sheet or builtin_cue_sheet("corridor-three-stage")
            points, dwell = corridor_waypoint_script(sheet)
            return WaypointWalker(points, dwell=dwell)
        raise ConfigError(f"{config.kind} scenario needs a walker")
    kind = _require(spec, "kind", "walker")
    speed = float(spec.get("speed", 1.4))
    if kind == "waypoint":
        points = spec.get("points")
        if points == "cue-sheet":
            if sheet is None:
                raise ConfigError("cue-sheet waypoint script needs a theater scenario")
            points, dwell = corridor_waypoint_script(sheet)
            return WaypointWalker(points, speed=speed, dwell=dwell)
        if not points:
            raise ConfigError("waypoint walker needs points")
        return WaypointWalker(points, speed=speed, dwell=spec.get("dwell"))
    if kind == "wander":
        start = spec.get("start")
        if start is None:
            if scene is None:
                raise ConfigError("wander walker needs a start or a scene")
            minx, miny, maxx, maxy = scene.bounds
            start = ((minx + maxx) / 2, (miny + maxy) / 2)
        return WanderWalker(
            start,
            speed=speed,
            turn_noise=float(spec.get("turn_noise", 1.5)),
            rng=substream(config.seed, "wander"),
            scene=scene,
        )
    if kind == "guided":
        start = spec.get("start", (1.5, 3.0))
        return GuidedWalker(start, speed=speed)
    if kind == "policy":
        raise ConfigError("policy walkers run through the rollout scenario kind")
    raise ConfigError(f"unknown walker kind {kind!r}")


# ---------------------------------------------------------------------------
# bundle writing


@dataclass
class Bundle:
    directory: Path
    kind: str
    seed: int

    def write_text(self, name: str, text: str) -> None:
        path = self.directory / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)

    def write_bytes(self, name: str, data: bytes) -> None:
        path = self.directory / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)

    def finalize(self) -> None:
        files = []
        for path in sorted(self.directory.rglob("*")):
            if path.is_dir() or path.name == "manifest.json":
                continue
            data = path.read_bytes()
            files.append(
                {
                    "name": str(path.relative_to(self.directory)),
                    "sha256": hashlib.sha256(data).hexdigest(),
                    "bytes": len(data),
                }
            )
        manifest = {
            "version": 1,
            "kind": self.kind,
            "seed": self.seed,
            "files": files,
        }
        (self.directory / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True)
        )


def verify_bundle(directory: str | Path) -> list[str]:
    """Re-hash every manifest entry; returns a list of problems (empty = ok)."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        return ["manifest.json missing"]
    manifest = json.loads(manifest_path.read_text())
    problems = []
    for entry in manifest.get("files", []):
        path = directory / entry["name"]
        if not path.exists():
            problems.append(f"{entry['name']}: missing")
            continue
        data = path.read_bytes()
        if hashlib.sha256(data).hexdigest() != entry["sha256"]:
            problems.append(f"{entry['name']}: hash mismatch")
        elif len(data) != entry["bytes"]:
            problems.append(f"{entry['name']}: size mismatch")
    return problems


# ---------------------------------------------------------------------------
# scenario implementations


def run_scenario(config: ScenarioConfig, out_root: str | Path, label: str = "run") -> Path:
    """Execute a scenario and write its artifact bundle; returns the path."""
    out_dir = Path(out_root) / label
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = Bundle(out_dir, config.kind, config.seed)
    bundle.write_text("config.json", json.dumps(config.doc, indent=2, sort_keys=True))
    runner = {
        "theater": _run_theater,
        "distortion": _run_distortion,
        "bubbles": _run_bubbles,
        "rollout": _run_rollout,
        "train": _run_train,
    }[config.kind]
    runner(config, bundle)
    report_mod.emit_report(out_dir)
    bundle.finalize()
    return out_dir


def _run_theater(config: ScenarioConfig, bundle: Bundle) -> None:
    scene = _load_scene(config, "corridor")
    sheet = _load_cue_sheet(config)
    walker = _build_walker(config, scene, sheet)
    dt = config.dt
    n_steps = int(round(config.duration / dt))
    state = stg.initial_state(sheet)
    events: list[stg.StageEvent] = []
    rows = []
    guide_records: list[gd.GuidanceRecord] = []
    particle_state: gd.ParticleGuideState | None = None
    arrow_state: gd.ArrowGuideState | None = None
    prng = substream(config.seed, "guidance-particles")

    pose = walker.pose
    rows.append((0.0, pose.x, pose.y, pose.heading, 0, sheet.stages[0].guidance.value, 0.0))
    for k in range(n_steps):
        stage_now = sheet.stages[state.stage_index]
        target, hold = _guidance_target(stage_now, state, pose)
        if isinstance(walker, GuidedWalker):
            pose = walker.step(dt, target, hold=hold)
        else:
            pose = walker.step(dt)
        state, evs = stg.step(state, sheet, pose.xy, dt)
        events.extend(evs)
        t = state.time

        mode = stage_now.guidance
        target3 = np.array([target[0], target[1], pose.head_height])
        performance_active = any(s is stg.ZoneStatus.PLAYING for s in state.zone_status)
        if mode is stg.GuidanceMode.PARTICLE:
            if particle_state is None:
                particle_state = gd.new_particle_state(pose, target3, rng=prng)
            particle_state = gd.particle_step(particle_state, pose, target3, dt)
            lead = particle_state.particles[0]
            guide_records.append(
                gd.GuidanceRecord(
                    t,
                    "particle",
                    {
                        "position": [round(v, 6) for v in lead.position.tolist()],
                        "count": len(particle_state.particles),
                    },
                )
            )
        elif mode is stg.GuidanceMode.ARROW:
            arrow_state = gd.arrow_pose(pose, target3, performance_active, dt, arrow_state)
            guide_records.append(
                gd.GuidanceRecord(
                    t,
                    "arrow",
                    {
                        "position": [round(v, 6) for v in arrow_state.position.tolist()],
                        "pointing": [round(v, 6) for v in arrow_state.pointing.tolist()],
                        "opacity": round(arrow_state.opacity, 6),
                    },
                )
            )
        gain = gd.audio_gain(pose.head, target3)
        guide_records.append(gd.GuidanceRecord(t, "audio", {"gain": round(gain, 6)}))

        dist_to_target = math.hypot(target[0] - pose.x, target[1] - pose.y)
        rows.append(
            (t, pose.x, pose.y, pose.heading, state.stage_index, mode.value, dist_to_target)
        )
        if state.ended:
            break

    arr = np.asarray([(r[0], r[1], r[2], r[3]) for r in rows])
    trace = LocomotionTrace(arr[:, 0], arr[:, 1:3], arr[:, 3])
    extras = {
        "stage": np.asarray([r[4] for r in rows]),
        "guidance": np.asarray([r[5] for r in rows], dtype=object),
        "target_dist": np.asarray([r[6] for r in rows]),
    }
    bundle.write_text("trace.csv", trace_to_csv(trace, extras))
    bundle.write_text("events.jsonl", stg.events_to_jsonl(events))
    bundle.write_text("guidance.csv", gd.guidance_csv(guide_records))


def _guidance_target(stage: stg.Stage, state: stg.StageState, pose: Pose):
    """Next guidance target and whether the walker should hold in place."""
    unvisited = [
        z
        for z, s in zip(stage.zones, state.zone_status)
        if s is stg.ZoneStatus.UNVISITED
    ]
    if unvisited:
        target = min(
            unvisited, key=lambda z: math.hypot(z.center[0] - pose.x, z.center[1] - pose.y)
        ).center
    else:
        target = stage.spiral
    hold = any(
        s is stg.ZoneStatus.PLAYING and z.contains(pose.xy)
        for z, s in zip(stage.zones, state.zone_status)
    )
    return target, hold


def _run_distortion(config: ScenarioConfig, bundle: Bundle) -> None:
    room_doc = config.doc.get("room", {})
    _check_keys(room_doc, {"width", "length", "height"}, "room")
    room = dist.RoomModel(
        width=float(room_doc.get("width", 4.5)),
        length=float(room_doc.get("length", 5.5)),
        height=float(room_doc.get("height", 2.5)),
    )
    treatment_doc = _require(config.doc, "treatment", "distortion config")
    _check_keys(treatment_doc, {"kind"}, "treatment")
    treat = dist.treatment(treatment_doc["kind"])
    timeline = _parse_timeline(config.doc.get("timeline"))
    scene = build_scene(_rect_graph(0.0, 0.0, room.width, room.length), wall_height=room.height)
    walker = _build_walker(config, scene)
    dt = config.dt
    duration = min(config.duration, timeline.total)
    n_steps = int(round(duration / dt))

    frng = substream(config.seed, "distortion-field")
    corners = np.array(
        [[0, 0, 0], [room.width, room.length, room.height]], dtype=np.float64
    )
    field = dist.new_particle_field((corners[0], corners[1]), frng)
    rows = [(0.0, walker.pose.x, walker.pose.y, walker.pose.heading)]
    field_counts = [(0.0, len(field.positions))]
    for k in range(n_steps):
        pose = walker.step(dt)
        t = (k + 1) * dt
        verts = dist.geometry_at(room, treat, timeline, min(t, timeline.total), corners)
        lo, hi = verts.min(axis=0), verts.max(axis=0)
        field = dist.particle_field_step(field, (lo, hi), dt, frng)
        field_counts.append((t, len(field.positions)))
        rows.append((t, pose.x, pose.y, pose.heading))

    arr = np.asarray(rows)
    trace = LocomotionTrace(arr[:, 0], arr[:, 1:3], arr[:, 3])
    bundle.write_text("trace.csv", trace_to_csv(trace))
    metrics = dist.segment_metrics(trace, timeline, room)
    bundle.write_text(
        "metrics.csv", dist.segment_metrics_csv([("walker", m) for m in metrics])
    )
    windows = dist.stimulus_windows(timeline)
    hist = dist.density_map([trace], room, windows=windows)
    bundle.write_bytes("density.pgm", dist.density_pgm(hist))
    bundle.write_text("density.json", dist.density_meta(room, room.tile, windows))
    bundle.write_text(
        "field_counts.csv",
        "t,count\n" + "".join(f"{t!r},{c}\n" for t, c in field_counts),
    )


def _parse_timeline(doc) -> dist.TreatmentTimeline:
    if doc is None:
        return dist.default_timeline()
    segments = tuple((dist.Phase(p), float(d)) for p, d in doc)
    return dist.TreatmentTimeline(segments)


def _run_bubbles(config: ScenarioConfig, bundle: Bundle) -> None:
    bubbles_doc = config.doc.get("bubbles", {})
    _check_keys(bubbles_doc, {"altitude"}, "bubbles")
    altitude = float(bubbles_doc.get("altitude", bub.DEFAULT_ALTITUDE_M))
    scene = builtin_scene("orchestra")
    walker = _build_walker(config, scene)
    space = bub.PlaySpace()
    brng = substream(config.seed, "bubbles")
    bubbles = bub.make_bubbles(space, brng, altitude=altitude)
    dt = config.dt
    n_steps = int(round(config.duration / dt))
    heads = [np.array([walker.pose.x, walker.pose.y, walker.pose.head_height])]
    frames = [bubbles]
    rows = [(0.0, walker.pose.x, walker.pose.y, walker.pose.heading)]
    for k in range(n_steps):
        pose = walker.step(dt)
        bubbles = bub.bubble_step(bubbles, space, dt, brng)
        heads.append(pose.head)
        frames.append(bubbles)
        rows.append(((k + 1) * dt, pose.x, pose.y, pose.heading))
    notes = bub.note_events(heads, frames, dt)
    arr = np.asarray(rows)
    trace = LocomotionTrace(arr[:, 0], arr[:, 1:3], arr[:, 3])
    bundle.write_text("trace.csv", trace_to_csv(trace))
    bundle.write_text("notes.jsonl", bub.note_events_jsonl(notes))
    bundle.write_text("notes.csv", bub.note_events_csv(notes))


def _run_rollout(config: ScenarioConfig, bundle: Bundle) -> None:
    doc = config.doc.get("rollout", {})
    _check_keys(doc, {"checkpoint", "episodes", "deterministic", "max_steps"}, "rollout")
    episodes = int(doc.get("episodes", 10))
    env = AudienceEnv(dt=config.dt, max_steps=int(doc.get("max_steps", 400)))
    checkpoint = doc.get("checkpoint")
    if checkpoint:
        path = config.base_dir / checkpoint
        if not path.exists():
            raise SceneLoadError(f"checkpoint not found: {path}")
        policy = load_policy(path)
    else:
        policy = PolicyNetwork.init(env.observation_dim, substream(config.seed, "policy-init"))
    results = rollout(
        policy, env, episodes, config.seed, deterministic=bool(doc.get("deterministic", False))
    )
    summary = ["episode,steps,zones_entered,total_reward,zone_order\n"]
    for i, res in enumerate(results):
        bundle.write_text(f"trace_{i:03d}.csv", trace_to_csv(res.trace))
        bundle.write_text(f"events_{i:03d}.jsonl", stg.events_to_jsonl(list(res.events)))
        summary.append(
            f"{i},{len(res.trace) - 1},{res.zones_entered},{res.total_reward!r},"
            f"{'|'.join(res.zone_order)}\n"
        )
    bundle.write_text("rollout.csv", "".join(summary))


def _run_train(config: ScenarioConfig, bundle: Bundle) -> None:
    doc = config.doc.get("train", {})
    _check_keys(
        doc,
        {"mode", "steps", "n_envs", "demo_episodes", "bc_epochs", "max_steps", "horizon"},
        "train",
    )
    mode = doc.get("mode", "bc+ppo")
    if mode not in ("bc", "ppo", "bc+ppo"):
        raise ConfigError(f"unknown train mode {mode!r}")
    max_steps = int(doc.get("max_steps", 400))
    env_proto = AudienceEnv(dt=config.dt, max_steps=max_steps)
    policy = PolicyNetwork.init(env_proto.observation_dim, substream(config.seed, "policy-init"))
    bc_losses: list[float] = []
    if "bc" in mode:
        demos = expert_demonstrations(
            env_proto, range(config.seed, config.seed + int(doc.get("demo_episodes", 20)))
        )
        policy, bc_losses = bc_train(
            demos, policy, epochs=int(doc.get("bc_epochs", 200)), seed=config.seed
        )
    stats = []
    if "ppo" in mode:
        run = TrainingRun(
            seed=config.seed,
            total_steps=int(doc.get("steps", 200_000)),
            n_envs=int(doc.get("n_envs", 18)),
            horizon=int(doc.get("horizon", 128)),
        )
        policy, stats = ppo_train(
            lambda i: AudienceEnv(dt=config.dt, max_steps=max_steps, seed=i), policy, run
        )
    save_policy(
        policy,
        bundle.directory / "policy.bin",
        meta={"mode": mode, "seed": config.seed, "bc_epochs": len(bc_losses)},
    )
    bundle.write_text("train_stats.csv", training_stats_csv(stats))
    if bc_losses:
        bundle.write_text(
            "bc_losses.csv", "epoch,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(bc_losses))
        )


# ---------------------------------------------------------------------------
# floorplan -> OBJ tracing runner


def run_trace(config_path: str | Path, out_root: str | Path, label: str = "run") -> Path:
    """Extrude a traced scene JSON into a Wavefront OBJ bundle."""
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"trace project not found: {config_path}")
    try:
        scene = scene_from_json(config_path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"trace project is not valid JSON: {exc}") from exc
    except Exception as exc:
        raise SceneLoadError(f"could not build scene: {exc}") from exc
    out_dir = Path(out_root) / label
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = Bundle(out_dir, "trace", 0)
    doc = json.loads(config_path.read_text())
    bundle.write_text("scene.json", scene_to_json(scene, float(doc.get("wall_height", 2.5))))
    bundle.write_bytes("model.obj", export_obj(scene.meshes))
    bundle.write_text(
        "report.json",
        json.dumps(
            {
                "kind": "trace",
                "meshes": len(scene.meshes),
                "vertices": int(sum(len(m.vertices) for m in scene.meshes)),
                "faces": int(sum(len(m.faces) for m in scene.meshes)),
            },
            indent=2,
            sort_keys=True,
        ),
    )
    bundle.finalize()
    return out_dir
