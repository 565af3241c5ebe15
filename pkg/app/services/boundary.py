"""Open-ocean domain boundaries.

Loxodromes are straight lines in spherical Mercator coordinates, so they are
sampled there and mapped back to lon/lat. Open lines are then cut against the
shorelines (planar lon/lat intersections) and the pieces are stitched into
closed loops by tracing the faces of the resulting planar graph.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from shapely.geometry import Point, Polygon

from app.config import get_settings
from app.errors import (
    GeometryRangeError,
    InvalidArgumentError,
    InvalidInputError,
    UnclosableDomainError,
)
from app.services.contours import Contour

logger = logging.getLogger(__name__)
settings = get_settings()

SHORELINE = "shoreline"
OPEN = "open"


# ──────────────────────────────────────────────
# Types
# ──────────────────────────────────────────────


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise InvalidInputError(f"non-finite coordinate ({self.lon}, {self.lat})")
        if not -90.0 < self.lat < 90.0:
            raise GeometryRangeError(f"latitude {self.lat} must lie strictly inside (-90, 90)")


@dataclass(frozen=True)
class LoxodromeSpec:
    """Constant-bearing line from ``start``.

    ``bearing`` is in degrees clockwise from north (west of north is
    negative). Exactly one of ``stop_lat`` / ``stop_lon`` ends the line.
    """

    start: GeoPoint
    bearing: float
    stop_lat: Optional[float] = None
    stop_lon: Optional[float] = None
    samples: int = field(default_factory=lambda: settings.loxodrome_samples)

    def __post_init__(self) -> None:
        if (self.stop_lat is None) == (self.stop_lon is None):
            raise InvalidArgumentError("a loxodrome needs exactly one of stop_lat or stop_lon")
        if self.samples < 2:
            raise InvalidArgumentError(f"a loxodrome needs at least 2 samples, got {self.samples}")
        if not math.isfinite(self.bearing):
            raise InvalidArgumentError("bearing must be finite")
        theta = math.radians(self.bearing)
        if self.stop_lat is not None and abs(math.cos(theta)) < 1e-12:
            raise InvalidArgumentError(
                f"bearing {self.bearing} follows a parallel and never reaches latitude {self.stop_lat}"
            )
        if self.stop_lon is not None and abs(math.sin(theta)) < 1e-12:
            raise InvalidArgumentError(
                f"bearing {self.bearing} follows a meridian and never reaches longitude {self.stop_lon}"
            )


@dataclass(frozen=True, eq=False)
class BoundarySegment:
    """A polyline piece of a loop, tagged with where it came from."""

    points: np.ndarray = field(repr=False)
    kind: str
    source: str
    class_tag: str = ""


@dataclass(eq=False)
class BoundaryLoop:
    segments: list[BoundarySegment]
    closed: bool = True
    role: str = "outer"
    parent: Optional[int] = None

    def vertices(self) -> np.ndarray:
        """Loop vertices without the repeated junction and closing points."""
        parts = [s.points[:-1] for s in self.segments]
        return np.concatenate(parts) if parts else np.empty((0, 2))

    def signed_area(self) -> float:
        return _signed_area(self.vertices())

    def check_closure(self, tolerance: Optional[float] = None) -> None:
        tolerance = settings.snap_tolerance if tolerance is None else tolerance
        if not self.segments:
            raise UnclosableDomainError("boundary loop has no segments")
        count = len(self.segments)
        for i, seg in enumerate(self.segments):
            if i == count - 1 and not self.closed:
                break
            following = self.segments[(i + 1) % count]
            gap = float(np.max(np.abs(seg.points[-1] - following.points[0])))
            if gap > tolerance:
                raise UnclosableDomainError(
                    f"loop segment {seg.source} ends {gap:.3e} degrees away from {following.source}",
                    lines=[seg.source, following.source],
                )


# ──────────────────────────────────────────────
# Loxodromes
# ──────────────────────────────────────────────


def mercator_y(lat: np.ndarray | float) -> np.ndarray | float:
    """y = ln tan(pi/4 + lat/2) = asinh(tan lat), lat in degrees; exactly 0 at the equator."""
    return np.arcsinh(np.tan(np.radians(lat)))


def inverse_mercator_y(y: np.ndarray | float) -> np.ndarray | float:
    return np.degrees(np.arctan(np.sinh(y)))


def _check_pole(lat: float, what: str) -> None:
    if abs(lat) > settings.pole_limit:
        raise GeometryRangeError(
            f"{what} latitude {lat} is beyond the +/-{settings.pole_limit} degree Mercator limit"
        )


def sample_loxodrome(spec: LoxodromeSpec) -> np.ndarray:
    """Sample a rhumb line as an (n, 2) lon/lat array.

    Samples are uniform in Mercator y for a latitude stop and uniform in
    longitude for a longitude stop. The first sample is the start and the
    last lies exactly on the stop limit.
    """
    start = spec.start
    _check_pole(start.lat, "start")
    theta = math.radians(spec.bearing)
    x0 = math.radians(start.lon)
    y0 = float(mercator_y(start.lat))
    n = spec.samples

    if spec.stop_lat is not None:
        _check_pole(spec.stop_lat, "stop")
        y1 = float(mercator_y(spec.stop_lat))
        if (y1 - y0) * math.cos(theta) <= 0.0:
            raise InvalidArgumentError(
                f"latitude {spec.stop_lat} is not ahead of {start.lat} on bearing {spec.bearing}"
            )
        y = np.linspace(y0, y1, n)
        x = x0 + (y - y0) * math.tan(theta)
        lon = np.degrees(x)
        lat = inverse_mercator_y(y)
        lat[-1] = spec.stop_lat
    else:
        x1 = math.radians(spec.stop_lon)
        if (x1 - x0) * math.sin(theta) <= 0.0:
            raise InvalidArgumentError(
                f"longitude {spec.stop_lon} is not ahead of {start.lon} on bearing {spec.bearing}"
            )
        x = np.linspace(x0, x1, n)
        y = y0 + (x - x0) / math.tan(theta)
        lon = np.degrees(x)
        lat = inverse_mercator_y(y)
        lon[-1] = spec.stop_lon
        worst = float(np.max(np.abs(lat)))
        if worst > settings.pole_limit:
            raise GeometryRangeError(
                f"loxodrome reaches latitude {worst:.4f} before longitude {spec.stop_lon}"
            )

    lon[0] = start.lon
    lat[0] = start.lat
    return np.column_stack((lon, lat))


def _resample(line: np.ndarray, samples: int) -> np.ndarray:
    t_old = np.linspace(0.0, 1.0, line.shape[0])
    t_new = np.linspace(0.0, 1.0, samples)
    out = np.column_stack(
        (np.interp(t_new, t_old, line[:, 0]), np.interp(t_new, t_old, line[:, 1]))
    )
    out[0] = line[0]
    out[-1] = line[-1]
    return out


def blend_loxodromes(
    a: np.ndarray, b: np.ndarray, samples: Optional[int] = None
) -> np.ndarray:
    """Convex blend running from a's start to b's start.

    result(t) = (1 - t) a(t) + t b(1 - t) on the shared sample parameter.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != 2 or b.shape[1] != 2:
        raise InvalidArgumentError("loxodromes must be (n, 2) arrays")
    if a.shape[0] != b.shape[0]:
        raise InvalidArgumentError(
            f"loxodromes have {a.shape[0]} and {b.shape[0]} samples; counts must match"
        )
    if a.shape[0] < 2:
        raise InvalidArgumentError("loxodromes need at least 2 samples")
    t = np.linspace(0.0, 1.0, a.shape[0])[:, None]
    blended = (1.0 - t) * a + t * b[::-1]
    blended[0] = a[0]
    blended[-1] = b[0]
    if samples is not None and samples != blended.shape[0]:
        if samples < 2:
            raise InvalidArgumentError(f"samples must be >= 2, got {samples}")
        blended = _resample(blended, samples)
    return blended


# Open boundaries of the North Sea / UK shelf domain.
PRESETS: dict[str, tuple[LoxodromeSpec, ...]] = {
    "north": (
        LoxodromeSpec(GeoPoint(-15.0, 57.0), bearing=-20.0, stop_lat=70.0),
        LoxodromeSpec(GeoPoint(5.45, 62.0), bearing=0.0, stop_lat=70.0),
    ),
    "south": (
        LoxodromeSpec(GeoPoint(-4.0, 48.5), bearing=-110.0, stop_lon=-25.0),
        LoxodromeSpec(GeoPoint(5.45, 62.0), bearing=-185.0, stop_lat=55.0),
    ),
    "skagerrak": (
        LoxodromeSpec(GeoPoint(8.0, 58.0 + 5.0 / 60.0), bearing=150.0, stop_lat=57.0),
    ),
}


def preset_line(name: str, samples: Optional[int] = None) -> np.ndarray:
    """Sample a named preset; pairs are blended."""
    if name not in PRESETS:
        raise InvalidArgumentError(
            f"unknown open boundary preset '{name}' (known: {', '.join(sorted(PRESETS))})"
        )
    specs = PRESETS[name]
    if samples is not None:
        specs = tuple(
            LoxodromeSpec(s.start, s.bearing, s.stop_lat, s.stop_lon, samples) for s in specs
        )
    lines = [sample_loxodrome(s) for s in specs]
    if len(lines) == 1:
        return lines[0]
    return blend_loxodromes(lines[0], lines[1])


# ──────────────────────────────────────────────
# Trimming
# ──────────────────────────────────────────────


def _signed_area(points: np.ndarray) -> float:
    if points.shape[0] < 3:
        return 0.0
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass
class _Curve:
    points: np.ndarray
    closed: bool
    kind: str
    source: str
    class_tag: str

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        if self.closed:
            return self.points, np.roll(self.points, -1, axis=0)
        return self.points[:-1], self.points[1:]

    def normalize(self, param: float) -> float:
        if self.closed:
            return param % self.points.shape[0]
        return param

    def between(self, lo: float, hi: float, tol: float) -> np.ndarray:
        """Vertices strictly inside the parameter range (lo, hi); hi may wrap past n."""
        idx = np.arange(math.floor(lo) + 1, math.ceil(hi))
        idx = idx[(idx > lo + tol) & (idx < hi - tol)]
        if self.closed:
            idx = idx % self.points.shape[0]
        return self.points[idx]


@dataclass
class _Hit:
    curve_a: int
    curve_b: int
    param_a: float
    param_b: float
    point: np.ndarray
    node: int = -1


def _snap(t: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Snap parameters within tol of 0 or 1; the mask marks values that moved."""
    near_start = np.abs(t) <= tol
    near_end = np.abs(t - 1.0) <= tol
    snapped = np.where(near_start, 0.0, np.where(near_end, 1.0, t))
    return snapped, snapped != t


def _intersections(a: _Curve, b: _Curve, ia: int, ib: int, tol: float) -> list[_Hit]:
    """All planar crossings between two curves, one hit per crossing point."""
    p, pa = a.segments()
    q, qb = b.segments()
    r = pa - p
    s = qb - q
    qp = q[None, :, :] - p[:, None, :]
    denom = r[:, None, 0] * s[None, :, 1] - r[:, None, 1] * s[None, :, 0]
    cross_qp_s = qp[..., 0] * s[None, :, 1] - qp[..., 1] * s[None, :, 0]
    cross_qp_r = qp[..., 0] * r[:, None, 1] - qp[..., 1] * r[:, None, 0]

    scale = np.linalg.norm(r, axis=1)[:, None] * np.linalg.norm(s, axis=1)[None, :]
    parallel = np.abs(denom) <= 1e-14 * np.maximum(scale, 1e-300)

    collinear = parallel & (np.abs(cross_qp_r) <= tol * np.maximum(scale, 1e-300))
    if collinear.any():
        rr = np.maximum(np.sum(r * r, axis=1), 1e-300)[:, None]
        t0 = np.sum(qp * r[:, None, :], axis=2) / rr
        t1 = t0 + np.sum(s[None, :, :] * r[:, None, :], axis=2) / rr
        overlap = collinear & (np.maximum(t0, t1) > tol) & (np.minimum(t0, t1) < 1.0 - tol)
        for i, j in np.argwhere(overlap):
            logger.warning(
                f"Collinear overlap between {a.source} segment {i} and {b.source} segment {j}; "
                f"no crossing recorded there"
            )

    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(parallel, np.nan, cross_qp_s / denom)
        u = np.where(parallel, np.nan, cross_qp_r / denom)
    inside = (t >= -tol) & (t <= 1.0 + tol) & (u >= -tol) & (u <= 1.0 + tol)

    hits: list[_Hit] = []
    for i, j in np.argwhere(inside):
        ts, t_snapped = _snap(np.array([t[i, j]]), tol)
        us, u_snapped = _snap(np.array([u[i, j]]), tol)
        if t_snapped[0] or u_snapped[0]:
            logger.warning(
                f"Near-endpoint crossing of {a.source} and {b.source} at segments {i}/{j}; "
                f"snapped to the segment endpoint"
            )
        point = p[i] + ts[0] * r[i] if (t_snapped[0] or not u_snapped[0]) else q[j] + us[0] * s[j]
        hits.append(
            _Hit(
                curve_a=ia,
                curve_b=ib,
                param_a=a.normalize(float(i) + float(ts[0])),
                param_b=b.normalize(float(j) + float(us[0])),
                point=point,
            )
        )

    # a crossing at a shared vertex is found on both adjoining segments
    unique: list[_Hit] = []
    for hit in hits:
        if any(np.max(np.abs(hit.point - other.point)) <= tol for other in unique):
            continue
        unique.append(hit)
    return unique


def _trim_ranges(
    curves: list[_Curve], hits: list[_Hit], open_ids: list[int], tol: float
) -> dict[int, tuple[float, float]]:
    ranges: dict[int, tuple[float, float]] = {}
    failing: list[str] = []
    for ci in open_ids:
        shore: list[float] = []
        every: list[float] = []
        for h in hits:
            for this, other, param in (
                (h.curve_a, h.curve_b, h.param_a),
                (h.curve_b, h.curve_a, h.param_b),
            ):
                if this != ci:
                    continue
                every.append(param)
                if curves[other].kind == SHORELINE:
                    shore.append(param)
        chosen = shore if len(shore) >= 2 else every
        if len(chosen) < 2:
            failing.append(curves[ci].source)
            continue
        if len(shore) < 2:
            logger.info(
                f"Open line {curves[ci].source} crosses shorelines {len(shore)} time(s); "
                f"trimming at crossings with other open lines"
            )
        ranges[ci] = (min(chosen) - tol, max(chosen) + tol)
    if failing:
        raise UnclosableDomainError(
            f"open line(s) with fewer than two crossings: {', '.join(failing)}", lines=failing
        )
    return ranges


def _assign_nodes(hits: list[_Hit], tol: float) -> list[np.ndarray]:
    nodes: list[np.ndarray] = []
    for h in hits:
        for k, node in enumerate(nodes):
            if np.max(np.abs(node - h.point)) <= tol:
                h.node = k
                break
        else:
            h.node = len(nodes)
            nodes.append(h.point)
    return nodes


@dataclass
class _Edge:
    u: int
    v: int
    points: np.ndarray
    curve: int


def _split_curves(
    curves: list[_Curve], hits: list[_Hit], nodes: list[np.ndarray], tol: float
) -> list[_Edge]:
    per_curve: dict[int, list[tuple[float, int]]] = {}
    for h in hits:
        per_curve.setdefault(h.curve_a, []).append((h.param_a, h.node))
        per_curve.setdefault(h.curve_b, []).append((h.param_b, h.node))

    edges: list[_Edge] = []
    for ci, marks in sorted(per_curve.items()):
        curve = curves[ci]
        marks = sorted(set(marks))
        merged: list[tuple[float, int]] = []
        for param, node in marks:
            if merged and merged[-1][1] == node and abs(merged[-1][0] - param) <= tol:
                continue
            merged.append((param, node))
        pairs = list(zip(merged[:-1], merged[1:]))
        if curve.closed:
            first = merged[0]
            pairs.append((merged[-1], (first[0] + curve.points.shape[0], first[1])))
        for (lo, u), (hi, v) in pairs:
            if hi - lo <= tol and u == v:
                continue
            inner = curve.between(lo, hi, tol)
            points = np.vstack((nodes[u], inner, nodes[v]))
            edges.append(_Edge(u=u, v=v, points=points, curve=ci))
    return edges


def _prune_dangling(edges: list[_Edge]) -> list[_Edge]:
    edges = list(edges)
    while True:
        degree: dict[int, int] = {}
        for e in edges:
            degree[e.u] = degree.get(e.u, 0) + 1
            degree[e.v] = degree.get(e.v, 0) + 1
        kept = [e for e in edges if degree[e.u] > 1 and degree[e.v] > 1]
        if len(kept) == len(edges):
            return kept
        edges = kept


def _departure(points: np.ndarray) -> float:
    origin = points[0]
    for pt in points[1:]:
        d = pt - origin
        if d[0] != 0.0 or d[1] != 0.0:
            return math.atan2(d[1], d[0])
    return 0.0


def _trace_faces(edges: list[_Edge]) -> list[list[int]]:
    """Faces as cycles of half-edges (2e forward, 2e+1 reversed); face on the left."""

    def points_of(h: int) -> np.ndarray:
        e = edges[h // 2]
        return e.points if h % 2 == 0 else e.points[::-1]

    def origin(h: int) -> int:
        e = edges[h // 2]
        return e.u if h % 2 == 0 else e.v

    outgoing: dict[int, list[int]] = {}
    for h in range(2 * len(edges)):
        outgoing.setdefault(origin(h), []).append(h)
    for node, hs in outgoing.items():
        hs.sort(key=lambda h: (_departure(points_of(h)), h))
    position = {h: i for hs in outgoing.values() for i, h in enumerate(hs)}

    def following(h: int) -> int:
        twin = h ^ 1
        ring = outgoing[origin(twin)]
        return ring[(position[twin] - 1) % len(ring)]

    seen: set[int] = set()
    faces: list[list[int]] = []
    for start in range(2 * len(edges)):
        if start in seen:
            continue
        cycle = []
        h = start
        while h not in seen:
            seen.add(h)
            cycle.append(h)
            h = following(h)
        faces.append(cycle)
    return faces


def _segment(curve: _Curve, points: np.ndarray) -> BoundarySegment:
    points = np.array(points, dtype=np.float64)
    points.setflags(write=False)
    return BoundarySegment(points=points, kind=curve.kind, source=curve.source, class_tag=curve.class_tag)


def trim_to_domain(
    shorelines: Sequence[Contour],
    open_lines: Sequence[np.ndarray],
    seed: Optional[GeoPoint] = None,
    names: Optional[Sequence[str]] = None,
) -> list[BoundaryLoop]:
    """Cut open lines against shorelines and stitch closed domain loops.

    Outer loops come first (counterclockwise), followed by the islands they
    contain (clockwise, ``parent`` set to the outer loop's index).
    """
    tol = settings.snap_tolerance
    if names is None:
        names = [f"open-{i}" for i in range(len(open_lines))]
    if len(names) != len(open_lines):
        raise InvalidArgumentError(f"{len(names)} names for {len(open_lines)} open lines")
    if not open_lines:
        raise UnclosableDomainError("no open boundary lines given")

    curves: list[_Curve] = [
        _Curve(c.points, c.closed, SHORELINE, c.id, c.class_tag) for c in shorelines
    ]
    open_ids: list[int] = []
    for name, line in zip(names, open_lines):
        line = np.asarray(line, dtype=np.float64)
        if line.ndim != 2 or line.shape[1] != 2 or line.shape[0] < 2:
            raise InvalidInputError(f"open line {name} must be an (n, 2) array with n >= 2")
        if not np.all(np.isfinite(line)):
            raise InvalidInputError(f"open line {name} has non-finite coordinates")
        open_ids.append(len(curves))
        curves.append(_Curve(line, False, OPEN, name, OPEN))

    hits: list[_Hit] = []
    for ia in open_ids:
        for ib in range(len(curves)):
            if ib == ia or (ib in open_ids and ib < ia):
                continue
            hits.extend(_intersections(curves[ia], curves[ib], ia, ib, tol))

    ranges = _trim_ranges(curves, hits, open_ids, tol)

    def kept(h: _Hit) -> bool:
        for ci, param in ((h.curve_a, h.param_a), (h.curve_b, h.param_b)):
            if ci in ranges and not ranges[ci][0] <= param <= ranges[ci][1]:
                return False
        return True

    hits = [h for h in hits if kept(h)]
    nodes = _assign_nodes(hits, tol)
    edges = _prune_dangling(_split_curves(curves, hits, nodes, tol))
    if not edges:
        raise UnclosableDomainError(
            "open lines and shorelines do not enclose any area", lines=list(names)
        )

    faces = []
    for cycle in _trace_faces(edges):
        pieces = [
            (edges[h // 2].curve, edges[h // 2].points if h % 2 == 0 else edges[h // 2].points[::-1])
            for h in cycle
        ]
        ring = np.concatenate([p[:-1] for _, p in pieces])
        area = _signed_area(ring)
        touches_open = any(curves[ci].kind == OPEN for ci, _ in pieces)
        if area > 0.0 and touches_open:
            faces.append((pieces, ring, area))

    if seed is not None:
        probe = Point(seed.lon, seed.lat)
        containing = [f for f in faces if Polygon(f[1]).contains(probe)]
        if not containing:
            raise UnclosableDomainError(
                f"seed ({seed.lon}, {seed.lat}) is not inside any closed domain", lines=list(names)
            )
        faces = [min(containing, key=lambda f: f[2])]

    if not faces:
        raise UnclosableDomainError(
            "no closed area is bounded by an open line", lines=list(names)
        )

    outers = [
        BoundaryLoop(segments=[_segment(curves[ci], pts) for ci, pts in pieces], role="outer")
        for pieces, _, _ in faces
    ]
    polygons = [Polygon(ring) for _, ring, _ in faces]

    touched = {h.curve_a for h in hits} | {h.curve_b for h in hits}
    islands: list[BoundaryLoop] = []
    for ci, curve in enumerate(curves):
        if curve.kind != SHORELINE or not curve.closed or ci in touched:
            continue
        shape = Polygon(curve.points)
        parents = [i for i, poly in enumerate(polygons) if poly.contains(shape)]
        if not parents:
            logger.debug(f"Closed shoreline {curve.source} lies outside the domain")
            continue
        points = curve.points if _signed_area(curve.points) < 0.0 else curve.points[::-1]
        closed_ring = np.vstack((points, points[:1]))
        islands.append(
            BoundaryLoop(
                segments=[_segment(curve, closed_ring)],
                role="island",
                parent=min(parents, key=lambda i: polygons[i].area),
            )
        )

    loops = outers + islands
    for loop in loops:
        loop.check_closure(tol)
    logger.info(
        f"Domain closed: {len(outers)} outer loop(s), {len(islands)} island(s), "
        f"{len(nodes)} crossing node(s)"
    )
    return loops
