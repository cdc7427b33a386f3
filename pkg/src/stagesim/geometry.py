"""Digital-twin venue geometry.

Floorplan bitmaps are traced into a joint/segment graph, extruded into wall
quads and watertight object prisms, and exported as Wavefront OBJ. The
resulting occlusion scene answers the spatial queries every other module
relies on: raycasts against wall/obstacle edges, line-of-sight tests, and
walkable-region containment.

Units are meters throughout; the floor plane is z=0 and all rotation is yaw
(about +z). All types are immutable values; operations return new values.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

SNAP_TOLERANCE = 0.02     # m; joints closer than this merge while tracing
OCCUPIED_LUMINANCE = 0.5  # bitmap luminance below this counts as occupied
OBJ_DECIMALS = 6          # canonical OBJ coordinate formatting


class GeometryError(Exception):
    """Base class for venue-geometry errors."""


class DecodeError(GeometryError):
    """Floorplan bytes did not decode as a raster image."""


class ScaleError(GeometryError):
    """Non-positive pixels-per-meter scale."""


class DegenerateSegment(GeometryError):
    """Trace segment endpoints coincide within snap tolerance."""


class UnknownJoint(GeometryError):
    """Joint id does not exist in the trace graph."""


class OpenObjectLoop(GeometryError):
    """Object-mode segments do not form closed loops."""


class InvalidDirection(GeometryError):
    """Raycast direction is not a unit vector."""


class OutOfBounds(GeometryError):
    """Query point lies outside the scene bounds."""


class SegmentMode(Enum):
    WALL = "wall"
    OBJECT = "object"


# ---------------------------------------------------------------------------
# floorplan bitmaps


@dataclass(frozen=True)
class FloorPlanImage:
    """Grayscale occupancy bitmap with a pixels-per-meter calibration."""

    width_px: int
    height_px: int
    pixels: np.ndarray  # (height_px, width_px) luminance in [0, 1]
    pixels_per_meter: float

    @property
    def width_m(self) -> float:
        return self.width_px / self.pixels_per_meter

    @property
    def height_m(self) -> float:
        return self.height_px / self.pixels_per_meter

    def occupied(self, row: int, col: int) -> bool:
        """Advisory occupancy test; tracing itself is operator-driven."""
        return bool(self.pixels[row, col] < OCCUPIED_LUMINANCE)


def load_floorplan(data: bytes, pixels_per_meter: float) -> FloorPlanImage:
    """Decode PNG (or any PIL-readable raster) bytes into a calibrated bitmap."""
    if pixels_per_meter <= 0:
        raise ScaleError(f"pixels_per_meter must be positive, got {pixels_per_meter}")
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(io.BytesIO(data)) as img:
            gray = img.convert("L")
            pixels = np.asarray(gray, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"could not decode floorplan image: {exc}") from exc
    height_px, width_px = pixels.shape
    if width_px < 1 or height_px < 1:
        raise DecodeError("floorplan image is empty")
    return FloorPlanImage(width_px, height_px, pixels, float(pixels_per_meter))


# ---------------------------------------------------------------------------
# trace graph


@dataclass(frozen=True)
class TraceGraph:
    """Joints and wall/object segments traced over a floorplan."""

    joints: tuple[tuple[float, float], ...] = ()
    segments: tuple[tuple[int, int, SegmentMode], ...] = ()

    def joint_array(self) -> np.ndarray:
        if not self.joints:
            return np.zeros((0, 2))
        return np.asarray(self.joints, dtype=np.float64)


def _snap_or_add(joints: list[tuple[float, float]], p: Sequence[float]) -> int:
    px, py = float(p[0]), float(p[1])
    for i, (jx, jy) in enumerate(joints):
        if math.hypot(px - jx, py - jy) <= SNAP_TOLERANCE:
            return i
    joints.append((px, py))
    return len(joints) - 1


def trace_segment(
    graph: TraceGraph,
    a: Sequence[float],
    b: Sequence[float],
    mode: SegmentMode,
) -> TraceGraph:
    """Append a traced segment, snapping endpoints to nearby joints (2 cm)."""
    if math.hypot(float(b[0]) - float(a[0]), float(b[1]) - float(a[1])) <= SNAP_TOLERANCE:
        raise DegenerateSegment(f"segment endpoints coincide: {tuple(a)} ~ {tuple(b)}")
    joints = list(graph.joints)
    ia = _snap_or_add(joints, a)
    ib = _snap_or_add(joints, b)
    if ia == ib:
        raise DegenerateSegment("segment endpoints snapped to the same joint")
    segments = graph.segments + ((ia, ib, mode),)
    return TraceGraph(tuple(joints), segments)


def move_joint(graph: TraceGraph, joint_id: int, new_pos: Sequence[float]) -> TraceGraph:
    """Relocate a joint; incident segments follow by reference."""
    if not 0 <= joint_id < len(graph.joints):
        raise UnknownJoint(f"no joint with id {joint_id}")
    joints = list(graph.joints)
    joints[joint_id] = (float(new_pos[0]), float(new_pos[1]))
    return TraceGraph(tuple(joints), graph.segments)


# ---------------------------------------------------------------------------
# extrusion


@dataclass(frozen=True)
class ExtrudedMesh:
    vertices: np.ndarray  # (N, 3) float64
    faces: np.ndarray     # (M, 3) int, indices into vertices
    source: SegmentMode
    height: float

    def signed_volume(self) -> float:
        """Divergence-theorem volume; positive for outward-wound closed meshes."""
        v = self.vertices
        f = self.faces
        a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        return float(np.sum(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0)


def _polygon_signed_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _ear_clip(points: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate a simple CCW polygon by ear clipping.

    Returns index triples into ``points``. O(n^3) worst case, which is fine
    for hand-traced footprints.
    """
    n = len(points)
    if n < 3:
        raise OpenObjectLoop("object loop has fewer than 3 joints")
    idx = list(range(n))
    tris: list[tuple[int, int, int]] = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 2 * n * n:
            raise OpenObjectLoop("object loop is not a simple polygon")
        clipped = False
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = points[i0], points[i1], points[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= 1e-12:  # reflex or collinear corner, not an ear
                continue
            ear = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                if _point_in_triangle(points[j], a, b, c):
                    ear = False
                    break
            if ear:
                tris.append((i0, i1, i2))
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise OpenObjectLoop("object loop is not a simple polygon")
    tris.append((idx[0], idx[1], idx[2]))
    return tris


def _point_in_triangle(p, a, b, c) -> bool:
    d1 = (p[0] - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (p[1] - b[1])
    d2 = (p[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (p[1] - c[1])
    d3 = (p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])
    has_neg = (d1 < 0) or (d2 < 0) or (d3 < 0)
    has_pos = (d1 > 0) or (d2 > 0) or (d3 > 0)
    return not (has_neg and has_pos)


def object_loops(graph: TraceGraph) -> list[list[int]]:
    """Extract the closed joint loops formed by object-mode segments.

    Raises OpenObjectLoop unless every object joint has degree exactly 2 and
    every connected component closes on itself.
    """
    adj: dict[int, list[int]] = {}
    for a, b, mode in graph.segments:
        if mode is not SegmentMode.OBJECT:
            continue
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for joint, nbrs in adj.items():
        if len(nbrs) != 2:
            raise OpenObjectLoop(f"joint {joint} has {len(nbrs)} object segments, need 2")
    loops: list[list[int]] = []
    seen: set[int] = set()
    for start in sorted(adj):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxt = [n for n in adj[cur] if n != prev]
            # a two-joint "loop" would revisit prev; degree check already
            # guarantees len(nxt) >= 1 here
            step = nxt[0] if nxt else prev
            if step == start:
                break
            if step in seen:
                raise OpenObjectLoop("object segments do not form simple loops")
            loop.append(step)
            seen.add(step)
            prev, cur = cur, step
        if len(loop) < 3:
            raise OpenObjectLoop("object loop has fewer than 3 joints")
        loops.append(loop)
    return loops


def extrude(graph: TraceGraph, wall_height: float) -> list[ExtrudedMesh]:
    """Extrude wall segments into quads and object loops into capped prisms.

    Walls become vertical two-triangle quads from z=0 to z=wall_height.
    Object loops become watertight prisms with outward-facing winding, so a
    prism's signed volume equals footprint area times height.
    """
    if wall_height <= 0:
        raise GeometryError(f"wall_height must be positive, got {wall_height}")
    pts = graph.joint_array()
    meshes: list[ExtrudedMesh] = []

    for a, b, mode in graph.segments:
        if mode is not SegmentMode.WALL:
            continue
        (ax, ay), (bx, by) = pts[a], pts[b]
        verts = np.array(
            [
                [ax, ay, 0.0],
                [bx, by, 0.0],
                [bx, by, wall_height],
                [ax, ay, wall_height],
            ]
        )
        faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.intp)
        meshes.append(ExtrudedMesh(verts, faces, SegmentMode.WALL, wall_height))

    for loop in object_loops(graph):
        ring = pts[loop]
        if abs(_polygon_signed_area(ring)) < 1e-12:
            raise OpenObjectLoop("object loop has zero area")
        if _polygon_signed_area(ring) < 0:  # normalize to CCW seen from above
            ring = ring[::-1]
        n = len(ring)
        bottom = np.column_stack([ring, np.zeros(n)])
        top = np.column_stack([ring, np.full(n, wall_height)])
        verts = np.vstack([bottom, top])
        tris = _ear_clip(ring)
        faces: list[tuple[int, int, int]] = []
        # bottom cap faces down: reverse the CCW triangulation
        faces.extend((i0, i2, i1) for i0, i1, i2 in tris)
        # top cap faces up
        faces.extend((n + i0, n + i1, n + i2) for i0, i1, i2 in tris)
        # side quads face outward (interior lies left of each CCW edge)
        for k in range(n):
            a0, b0 = k, (k + 1) % n
            a1, b1 = n + a0, n + b0
            faces.append((a0, b0, b1))
            faces.append((a0, b1, a1))
        meshes.append(
            ExtrudedMesh(verts, np.asarray(faces, dtype=np.intp), SegmentMode.OBJECT, wall_height)
        )
    return meshes


# ---------------------------------------------------------------------------
# OBJ export

_OBJ_HEADER = "# stagesim wavefront export\n"


def export_obj(meshes: Iterable[ExtrudedMesh]) -> bytes:
    """Serialize meshes to canonical ASCII OBJ (v/f records, 6 decimals).

    Ordering follows creation order with 1-based face indices, so the output
    is byte-stable: export -> parse -> export reproduces itself exactly.
    """
    lines = [_OBJ_HEADER]
    offset = 0
    face_lines: list[str] = []
    for mesh in meshes:
        for v in mesh.vertices:
            lines.append(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n")
        for f in mesh.faces:
            face_lines.append(f"f {f[0] + 1 + offset} {f[1] + 1 + offset} {f[2] + 1 + offset}\n")
        offset += len(mesh.vertices)
    lines.extend(face_lines)
    return "".join(lines).encode("ascii")


def parse_obj(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Parse v/f records back into (vertices, faces) arrays (0-based faces)."""
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    for raw in data.decode("ascii").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(tok.split("/")[0]) - 1 for tok in parts[1:4]])
    return (
        np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.intp).reshape(-1, 3),
    )


# ---------------------------------------------------------------------------
# anchor alignment transform


@dataclass(frozen=True)
class AnchorTransform:
    """Uniform-scale rigid alignment: p' = scale * Rz(rotation) * p + translation."""

    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: float = 0.0
    uniform_scale: float = 1.0

    def __post_init__(self):
        if self.uniform_scale <= 0:
            raise GeometryError(f"uniform_scale must be positive, got {self.uniform_scale}")

    def inverse(self) -> "AnchorTransform":
        s = 1.0 / self.uniform_scale
        c, sn = math.cos(-self.rotation), math.sin(-self.rotation)
        tx, ty, tz = self.translation
        ix = -s * (c * tx - sn * ty)
        iy = -s * (sn * tx + c * ty)
        iz = -s * tz
        return AnchorTransform((ix, iy, iz), -self.rotation, s)


def apply_anchor(t: AnchorTransform, p: Sequence[float]) -> np.ndarray:
    """Apply the alignment transform to a 3D point (or an (N,3) batch)."""
    arr = np.asarray(p, dtype=np.float64)
    c, s = math.cos(t.rotation), math.sin(t.rotation)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    out = t.uniform_scale * (arr @ rot.T) + np.asarray(t.translation)
    return out


# ---------------------------------------------------------------------------
# occlusion scene and spatial queries


@dataclass(frozen=True)
class OcclusionScene:
    """Queryable digital twin: blocking edges, walkable region, bounds."""

    meshes: tuple[ExtrudedMesh, ...]
    wall_edges: np.ndarray              # (E, 2, 2) floor-plane blocking edges
    footprints: tuple[np.ndarray, ...]  # object loops as (K, 2) rings (holes)
    bounds: tuple[float, float, float, float]  # minx, miny, maxx, maxy
    graph: TraceGraph = field(default=TraceGraph(), compare=False)
    anchor: AnchorTransform | None = field(default=None, compare=False)

    @property
    def walkable_outer(self) -> np.ndarray:
        minx, miny, maxx, maxy = self.bounds
        return np.array([[minx, miny], [maxx, miny], [maxx, maxy], [minx, maxy]])


def build_scene(
    graph: TraceGraph,
    wall_height: float = 2.5,
    bounds: tuple[float, float, float, float] | None = None,
    anchor: AnchorTransform | None = None,
) -> OcclusionScene:
    """Extrude a trace graph and assemble the queryable occlusion scene.

    Blocking edges are all wall segments plus every object-footprint edge.
    The walkable region is the bounds rectangle minus object footprints
    (walls are infinitely thin and do not remove floor area).
    """
    meshes = extrude(graph, wall_height)
    pts = graph.joint_array()
    edges: list[np.ndarray] = []
    for a, b, mode in graph.segments:
        if mode is SegmentMode.WALL:
            edges.append(np.array([pts[a], pts[b]]))
    rings: list[np.ndarray] = []
    for loop in object_loops(graph):
        ring = pts[loop]
        rings.append(ring)
        for k in range(len(ring)):
            edges.append(np.array([ring[k], ring[(k + 1) % len(ring)]]))
    wall_edges = np.stack(edges) if edges else np.zeros((0, 2, 2))
    if bounds is None:
        if len(pts) == 0:
            raise GeometryError("cannot infer bounds from an empty graph")
        bounds = (
            float(pts[:, 0].min()),
            float(pts[:, 1].min()),
            float(pts[:, 0].max()),
            float(pts[:, 1].max()),
        )
    return OcclusionScene(tuple(meshes), wall_edges, tuple(rings), bounds, graph, anchor)


def _in_bounds(scene: OcclusionScene, p: Sequence[float]) -> bool:
    minx, miny, maxx, maxy = scene.bounds
    return minx <= p[0] <= maxx and miny <= p[1] <= maxy


def raycast(
    scene: OcclusionScene,
    origin: Sequence[float],
    direction: Sequence[float],
    max_range: float,
) -> float | None:
    """Distance to the nearest blocking edge along a unit direction, or None."""
    d = np.asarray(direction, dtype=np.float64)
    if abs(float(np.hypot(d[0], d[1])) - 1.0) > 1e-6:
        raise InvalidDirection(f"direction {tuple(direction)} is not unit length")
    t = _ray_hits(scene.wall_edges, np.asarray(origin, dtype=np.float64), d)
    if t is None or t > max_range:
        return None
    return t


def _ray_hits(edges: np.ndarray, o: np.ndarray, d: np.ndarray) -> float | None:
    if len(edges) == 0:
        return None
    p1 = edges[:, 0, :]
    s = edges[:, 1, :] - p1
    denom = d[0] * s[:, 1] - d[1] * s[:, 0]
    qp = p1 - o
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / denom
        u = (qp[:, 0] * d[1] - qp[:, 1] * d[0]) / denom
    ok = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    if not ok.any():
        return None
    return float(t[ok].min())


def _orient(u, v, w) -> float:
    return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])


def _within_box(u, v, w) -> bool:
    # w inside the bounding box of segment u-v (used with collinear points)
    return (
        min(u[0], v[0]) - 1e-12 <= w[0] <= max(u[0], v[0]) + 1e-12
        and min(u[1], v[1]) - 1e-12 <= w[1] <= max(u[1], v[1]) + 1e-12
    )


def _seg_intersect(a, b, p, q) -> bool:
    """Segment intersection including endpoint touches and collinear overlap."""
    o1, o2 = _orient(a, b, p), _orient(a, b, q)
    o3, o4 = _orient(p, q, a), _orient(p, q, b)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) and o1 != 0 and o2 != 0:
        return True
    if o1 == 0 and _within_box(a, b, p):
        return True
    if o2 == 0 and _within_box(a, b, q):
        return True
    if o3 == 0 and _within_box(p, q, a):
        return True
    if o4 == 0 and _within_box(p, q, b):
        return True
    return False


def _segments_cross(edges: np.ndarray, a: np.ndarray, b: np.ndarray) -> bool:
    """True if segment a-b strictly or tangentially intersects any edge."""
    if len(edges) == 0:
        return False
    p, q = edges[:, 0, :], edges[:, 1, :]
    s = q - p
    r = b - a
    d1 = s[:, 0] * (a[1] - p[:, 1]) - s[:, 1] * (a[0] - p[:, 0])
    d2 = s[:, 0] * (b[1] - p[:, 1]) - s[:, 1] * (b[0] - p[:, 0])
    d3 = r[0] * (p[:, 1] - a[1]) - r[1] * (p[:, 0] - a[0])
    d4 = r[0] * (q[:, 1] - a[1]) - r[1] * (q[:, 0] - a[0])
    proper = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0)) & (d1 != 0) & (d2 != 0)
    if proper.any():
        return True
    touch = (d1 == 0) | (d2 == 0) | (d3 == 0) | (d4 == 0)
    for k in np.nonzero(touch)[0]:
        if _seg_intersect(a, b, p[k], q[k]):
            return True
    return False


def line_of_sight(scene: OcclusionScene, a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff the open segment a-b crosses no wall or obstacle edge."""
    pa = np.asarray(a, dtype=np.float64)
    pb = np.asarray(b, dtype=np.float64)
    if not _in_bounds(scene, pa) or not _in_bounds(scene, pb):
        raise OutOfBounds(f"points {tuple(a)}, {tuple(b)} must lie inside scene bounds")
    if np.allclose(pa, pb):
        return True
    return not _segments_cross(scene.wall_edges, pa, pb)


def _point_in_ring(p: Sequence[float], ring: np.ndarray) -> bool:
    # even-odd crossing number with the half-open edge convention
    x, y = float(p[0]), float(p[1])
    x1, y1 = ring[:, 0], ring[:, 1]
    x2, y2 = np.roll(ring[:, 0], -1), np.roll(ring[:, 1], -1)
    cond = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    crossings = int(np.count_nonzero(cond & (x < xs)))
    return crossings % 2 == 1


def point_in_walkable(scene: OcclusionScene, p: Sequence[float]) -> bool:
    """Point-in-polygon-with-holes: inside bounds, outside every footprint."""
    if not _in_bounds(scene, p):
        return False
    return not any(_point_in_ring(p, ring) for ring in scene.footprints)


# ---------------------------------------------------------------------------
# scene JSON (schema v1)

SCENE_SCHEMA_VERSION = 1


def scene_to_json(scene: OcclusionScene, wall_height: float) -> str:
    doc = {
        "version": SCENE_SCHEMA_VERSION,
        "joints": [list(j) for j in scene.graph.joints],
        "segments": [[a, b, mode.value] for a, b, mode in scene.graph.segments],
        "wall_height": wall_height,
        "bounds": list(scene.bounds),
        "anchor": None
        if scene.anchor is None
        else {
            "translation": list(scene.anchor.translation),
            "rotation": scene.anchor.rotation,
            "scale": scene.anchor.uniform_scale,
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def scene_from_json(text: str) -> OcclusionScene:
    doc = json.loads(text)
    if doc.get("version") != SCENE_SCHEMA_VERSION:
        raise GeometryError(f"unsupported scene schema version: {doc.get('version')}")
    graph = TraceGraph(
        tuple((float(x), float(y)) for x, y in doc["joints"]),
        tuple((int(a), int(b), SegmentMode(m)) for a, b, m in doc["segments"]),
    )
    anchor = None
    if doc.get("anchor"):
        a = doc["anchor"]
        anchor = AnchorTransform(tuple(a["translation"]), float(a["rotation"]), float(a["scale"]))
    bounds = tuple(doc["bounds"]) if doc.get("bounds") else None
    return build_scene(graph, float(doc.get("wall_height", 2.5)), bounds, anchor)
