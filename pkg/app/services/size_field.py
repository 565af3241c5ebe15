"""Distance-graded mesh edge lengths and the mesh-generator geometry file.

Each rule keeps the edge length at ``h_min`` up to ``plateau`` degrees from
its shorelines, then ramps linearly to ``h_max`` over ``ramp`` degrees. The
exported file hands the same construction to the mesh generator as
Distance/Threshold/Min fields.
"""

from __future__ import annotations

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from app.config import get_settings
from app.errors import (
    GeoParseError,
    InvalidArgumentError,
    InvalidInputError,
    UnclosableDomainError,
)
from app.services.boundary import OPEN, SHORELINE, BoundaryLoop, GeoPoint
from app.services.contours import Contour
from app.services.geo_io import write_text_atomic

logger = logging.getLogger(__name__)
settings = get_settings()

EARTH_DEGREES = 180.0 / math.pi


# ──────────────────────────────────────────────
# Rules
# ──────────────────────────────────────────────


@dataclass(frozen=True)
class GradationRule:
    class_id: str
    h_min: float
    plateau: float
    ramp: float
    h_max: float = field(default_factory=lambda: settings.max_edge_length)

    def __post_init__(self) -> None:
        values = (self.h_min, self.plateau, self.ramp, self.h_max)
        if not all(math.isfinite(v) for v in values):
            raise InvalidArgumentError(f"rule {self.class_id}: parameters must be finite")
        if not 0.0 < self.h_min <= self.h_max:
            raise InvalidArgumentError(
                f"rule {self.class_id}: need 0 < h_min <= h_max, got {self.h_min} / {self.h_max}"
            )
        if self.plateau < 0.0:
            raise InvalidArgumentError(f"rule {self.class_id}: plateau must be >= 0")
        if self.ramp <= 0.0:
            raise InvalidArgumentError(f"rule {self.class_id}: ramp must be > 0")

    def size_at(self, d: np.ndarray | float) -> np.ndarray | float:
        fraction = np.clip((np.asarray(d, dtype=np.float64) - self.plateau) / self.ramp, 0.0, 1.0)
        return self.h_min + fraction * (self.h_max - self.h_min)


# Shoreline-class gradations of the North Sea / UK shelf meshes.
PRESET_RULES: dict[str, GradationRule] = {
    "p500k1": GradationRule("p500k1", h_min=0.1, plateau=0.0, ramp=1.0, h_max=1.5),
    "p100k1": GradationRule("p100k1", h_min=0.01, plateau=0.02, ramp=1.0, h_max=1.5),
    "p100k5": GradationRule("p100k5", h_min=0.005, plateau=0.02, ramp=1.0, h_max=1.5),
    "full": GradationRule("full", h_min=0.0005, plateau=0.05, ramp=1.0, h_max=1.5),
}

RuleBinding = tuple[GradationRule, Sequence[Contour]]


# ──────────────────────────────────────────────
# Evaluation
# ──────────────────────────────────────────────


def _segments_of(contours: Sequence[Contour]) -> tuple[np.ndarray, np.ndarray]:
    starts, ends = zip(*(c.segments() for c in contours))
    return np.concatenate(starts), np.concatenate(ends)


def central_angle(lon1, lat1, lon2, lat2) -> np.ndarray:
    """Haversine great-circle angle in degrees."""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_DEGREES * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def shoreline_distance(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Great-circle distance (degrees) from each point to the nearest segment.

    The nearest point on every segment is found in the tangent plane at the
    query point; the returned distance is the central angle to it.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    lon0 = points[:, 0:1]
    lat0 = points[:, 1:2]
    scale = np.cos(np.radians(lat0))

    def local(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dlon = (p[None, :, 0] - lon0 + 180.0) % 360.0 - 180.0
        return dlon * scale, p[None, :, 1] - lat0

    ax, ay = local(starts)
    bx, by = local(ends)
    dx, dy = bx - ax, by - ay
    length2 = dx * dx + dy * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(length2 > 0.0, -(ax * dx + ay * dy) / length2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    nx = ax + t * dx
    ny = ay + t * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        near_lon = lon0 + np.where(scale > 0.0, nx / scale, 0.0)
    near_lat = lat0 + ny
    return central_angle(lon0, lat0, near_lon, near_lat).min(axis=1)


def _check_rules(rules: Sequence[RuleBinding]) -> None:
    if not rules:
        raise InvalidArgumentError("at least one gradation rule is required")
    for rule, contours in rules:
        if not contours:
            raise InvalidArgumentError(f"rule {rule.class_id} has no shoreline contours")


def _sizes(points: np.ndarray, rules: Sequence[RuleBinding]) -> np.ndarray:
    sizes = np.full(points.shape[0], np.inf)
    for rule, contours in rules:
        starts, ends = _segments_of(contours)
        sizes = np.minimum(sizes, rule.size_at(shoreline_distance(points, starts, ends)))
    return sizes


def evaluate_size(pt: Union[GeoPoint, Sequence[float]], rules: Sequence[RuleBinding]) -> float:
    """Target edge length (degrees) at one point: the minimum over all rules."""
    _check_rules(rules)
    lon, lat = (pt.lon, pt.lat) if isinstance(pt, GeoPoint) else (float(pt[0]), float(pt[1]))
    return float(_sizes(np.array([[lon, lat]]), rules)[0])


def evaluate_sizes(
    points: np.ndarray,
    rules: Sequence[RuleBinding],
    workers: Optional[int] = None,
    chunk: int = 256,
) -> np.ndarray:
    """Batch evaluate_size over an (n, 2) lon/lat array."""
    _check_rules(rules)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise InvalidInputError(f"query points must be an (n, 2) array, got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise InvalidInputError("query points contain non-finite coordinates")
    workers = workers or settings.workers
    blocks = [points[i : i + chunk] for i in range(0, points.shape[0], chunk)]
    if not blocks:
        return np.empty(0)
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _sizes(b, rules), blocks))
    else:
        parts = [_sizes(b, rules) for b in blocks]
    return np.concatenate(parts)


# ──────────────────────────────────────────────
# Geometry file export
# ──────────────────────────────────────────────


def _num(value: float) -> str:
    return format(float(value), ".17g")


def _ids(values: Sequence[int]) -> str:
    return ", ".join(str(v) for v in values)


def _loop_ring(loop: BoundaryLoop) -> np.ndarray:
    """Loop vertices with consecutive duplicates removed (wrap included)."""
    vertices = loop.vertices()
    keep = np.any(vertices != np.roll(vertices, 1, axis=0), axis=1)
    if not keep.any():
        return vertices[:1]
    return vertices[keep]


def _segment_rings(loop: BoundaryLoop) -> list[tuple[np.ndarray, str]]:
    """Per segment: de-duplicated points and the physical group it belongs to."""
    out = []
    for seg in loop.segments:
        pts = seg.points
        keep = np.concatenate(([True], np.any(pts[1:] != pts[:-1], axis=1)))
        group = OPEN if seg.kind == OPEN else (seg.class_tag or SHORELINE)
        out.append((pts[keep], group))
    return out


def export_geo(
    loops: Sequence[BoundaryLoop],
    rules: Sequence[GradationRule],
    path: Optional[Union[str, Path]] = None,
    h_max: Optional[float] = None,
    curve_type: Optional[str] = None,
    sampling: Optional[int] = None,
) -> str:
    """Render the domain and its size field as version-2 geometry text.

    The text is parsed back and compared with the loop vertices before it
    is written to ``path``.
    """
    h_max = settings.max_edge_length if h_max is None else h_max
    curve_type = curve_type or settings.geo_curve_type
    sampling = sampling or settings.distance_sampling
    if curve_type not in ("line", "spline"):
        raise InvalidArgumentError(f"curve type must be 'line' or 'spline', got {curve_type!r}")
    if not loops:
        raise InvalidArgumentError("nothing to export: no boundary loops")
    for i, loop in enumerate(loops):
        if not loop.closed:
            raise UnclosableDomainError(f"loop {i} is not closed; refusing to export")
        loop.check_closure()
        for seg in loop.segments:
            if not np.all(np.isfinite(seg.points)):
                raise InvalidInputError(f"loop {i} segment {seg.source} has non-finite coordinates")

    out: list[str] = [f"// {settings.app_name} {settings.app_version} domain and size field"]
    point_ids: dict[tuple[float, float], int] = {}
    curve_ids: dict[tuple[int, ...], int] = {}
    groups: dict[str, list[int]] = {}

    def point(xy: np.ndarray) -> int:
        key = (float(xy[0]), float(xy[1]))
        if key not in point_ids:
            point_ids[key] = len(point_ids) + 1
            out.append(f"Point({point_ids[key]}) = {{{_num(key[0])}, {_num(key[1])}, 0, {_num(h_max)}}};")
        return point_ids[key]

    def curve(ids: tuple[int, ...], keyword: str) -> int:
        if ids in curve_ids:
            return curve_ids[ids]
        if ids[::-1] in curve_ids:
            return -curve_ids[ids[::-1]]
        curve_ids[ids] = len(curve_ids) + 1
        out.append(f"{keyword}({curve_ids[ids]}) = {{{_ids(ids)}}};")
        return curve_ids[ids]

    loop_curves: list[list[int]] = []
    for loop in loops:
        ring = _loop_ring(loop)
        if ring.shape[0] < 3:
            raise InvalidInputError("boundary loop has fewer than 3 distinct vertices")
        signed: list[int] = []
        for pts, group in _segment_rings(loop):
            ids = tuple(point(p) for p in pts)
            if curve_type == "spline" and len(ids) > 2:
                pieces = [(ids, "Spline")]
            else:
                pieces = [(ids[i : i + 2], "Line") for i in range(len(ids) - 1)]
            for piece, keyword in pieces:
                if len(piece) < 2 or (len(piece) == 2 and piece[0] == piece[1]):
                    continue
                cid = curve(piece, keyword)
                signed.append(cid)
                members = groups.setdefault(group, [])
                if abs(cid) not in members:
                    members.append(abs(cid))
        loop_curves.append(signed)

    surfaces: list[int] = []
    for i, signed in enumerate(loop_curves):
        out.append(f"Line Loop({i + 1}) = {{{_ids(signed)}}};")
    for i, loop in enumerate(loops):
        if loop.role != "outer":
            continue
        holes = [j + 1 for j, other in enumerate(loops) if other.role == "island" and other.parent == i]
        surfaces.append(i + 1)
        out.append(f"Plane Surface({i + 1}) = {{{_ids([i + 1, *holes])}}};")
    if not surfaces:
        raise UnclosableDomainError("no outer loop to build a surface from")

    for name, members in groups.items():
        out.append(f'Physical Line("{name}") = {{{_ids(members)}}};')
    out.append(f'Physical Surface("domain") = {{{_ids(surfaces)}}};')

    fields: list[int] = []
    next_field = 1
    for rule in rules:
        members = groups.get(rule.class_id)
        if not members:
            logger.warning(f"Gradation rule {rule.class_id} matches no boundary curve; skipped")
            continue
        distance, threshold = next_field, next_field + 1
        next_field += 2
        out.extend(
            [
                f"Field[{distance}] = Distance;",
                f"Field[{distance}].CurvesList = {{{_ids(members)}}};",
                f"Field[{distance}].Sampling = {sampling};",
                f"Field[{threshold}] = Threshold;",
                f"Field[{threshold}].InField = {distance};",
                f"Field[{threshold}].SizeMin = {rule.h_min!r};",
                f"Field[{threshold}].SizeMax = {rule.h_max!r};",
                f"Field[{threshold}].DistMin = {rule.plateau!r};",
                f"Field[{threshold}].DistMax = {rule.plateau + rule.ramp!r};",
            ]
        )
        fields.append(threshold)

    if fields:
        out.append(f"Field[{next_field}] = Min;")
        out.append(f"Field[{next_field}].FieldsList = {{{_ids(fields)}}};")
    else:
        out.append(f"Field[{next_field}] = MathEval;")
        out.append(f'Field[{next_field}].F = "{h_max!r}";')
    out.append(f"Background Field = {next_field};")
    out.extend(
        [
            "Mesh.MeshSizeExtendFromBoundary = 0;",
            "Mesh.MeshSizeFromPoints = 0;",
            "Mesh.MeshSizeFromCurvature = 0;",
        ]
    )
    text = "\n".join(out) + "\n"

    parsed = loop_vertices(read_geo(text))
    for i, loop in enumerate(loops):
        if i >= len(parsed) or not np.array_equal(parsed[i], _loop_ring(loop)):
            raise GeoParseError(f"exported loop {i} does not read back identically")

    if path is not None:
        write_text_atomic(path, text)
        logger.info(
            f"Wrote {path}: {len(point_ids)} points, {len(curve_ids)} curves, "
            f"{len(surfaces)} surface(s), {len(fields)} threshold field(s)"
        )
    return text


# ──────────────────────────────────────────────
# Geometry file reader
# ──────────────────────────────────────────────


@dataclass
class GeoModel:
    points: dict[int, tuple[float, ...]] = field(default_factory=dict)
    curves: dict[int, tuple[str, list[int]]] = field(default_factory=dict)
    line_loops: dict[int, list[int]] = field(default_factory=dict)
    surfaces: dict[int, list[int]] = field(default_factory=dict)
    physical_curves: dict[str, list[int]] = field(default_factory=dict)
    physical_surfaces: dict[str, list[int]] = field(default_factory=dict)
    fields: dict[int, dict[str, object]] = field(default_factory=dict)
    background_field: Optional[int] = None
    options: dict[str, str] = field(default_factory=dict)


_ENTITY = re.compile(
    r"^(Point|Line|Spline|Line Loop|Curve Loop|Plane Surface)\((\d+)\)\s*=\s*\{([^}]*)\}$"
)
_PHYSICAL = re.compile(r'^Physical (Line|Curve|Surface)\("([^"]*)"\)\s*=\s*\{([^}]*)\}$')
_FIELD = re.compile(r"^Field\[(\d+)\]\s*=\s*(\w+)$")
_FIELD_OPTION = re.compile(r"^Field\[(\d+)\]\.(\w+)\s*=\s*(.+)$")
_BACKGROUND = re.compile(r"^Background Field\s*=\s*(\d+)$")
_OPTION = re.compile(r"^(Mesh\.\w+)\s*=\s*(.+)$")


def _numbers(body: str, offset: int) -> list[float]:
    try:
        return [float(v) for v in body.split(",") if v.strip()]
    except ValueError:
        raise GeoParseError(f"non-numeric list at character {offset}", offset=offset)


def _option_value(raw: str, offset: int) -> object:
    raw = raw.strip()
    if raw.startswith("{") and raw.endswith("}"):
        return _numbers(raw[1:-1], offset)
    if raw.startswith('"') and raw.endswith('"'):
        return raw[1:-1]
    try:
        return float(raw)
    except ValueError:
        raise GeoParseError(f"unreadable field option value {raw!r} at character {offset}", offset=offset)


def read_geo(source: Union[str, Path]) -> GeoModel:
    """Parse the geometry subset written by export_geo (text or file path)."""
    if isinstance(source, Path) or (";" not in source and "\n" not in source):
        source = Path(source).read_text(encoding="utf-8")
    # blank out comments, keeping offsets
    text = re.sub(r"//[^\n]*", lambda m: " " * len(m.group()), source)

    model = GeoModel()
    for match in re.finditer(r"[^;]*;", text):
        statement = " ".join(match.group()[:-1].split())
        offset = match.start()
        if not statement:
            continue
        if m := _ENTITY.match(statement):
            kind, ident, body = m.group(1), int(m.group(2)), m.group(3)
            values = _numbers(body, offset)
            if kind == "Point":
                if len(values) != 4:
                    raise GeoParseError(f"Point({ident}) needs 4 values", offset=offset)
                model.points[ident] = tuple(values)
            elif kind in ("Line", "Spline"):
                model.curves[ident] = (kind, [int(v) for v in values])
            elif kind in ("Line Loop", "Curve Loop"):
                model.line_loops[ident] = [int(v) for v in values]
            else:
                model.surfaces[ident] = [int(v) for v in values]
        elif m := _PHYSICAL.match(statement):
            target = model.physical_surfaces if m.group(1) == "Surface" else model.physical_curves
            target[m.group(2)] = [int(v) for v in _numbers(m.group(3), offset)]
        elif m := _FIELD.match(statement):
            model.fields[int(m.group(1))] = {"type": m.group(2)}
        elif m := _FIELD_OPTION.match(statement):
            ident = int(m.group(1))
            if ident not in model.fields:
                raise GeoParseError(f"option for undefined Field[{ident}]", offset=offset)
            model.fields[ident][m.group(2)] = _option_value(m.group(3), offset)
        elif m := _BACKGROUND.match(statement):
            model.background_field = int(m.group(1))
        elif m := _OPTION.match(statement):
            model.options[m.group(1)] = m.group(2)
        else:
            raise GeoParseError(f"unrecognised statement at character {offset}: {statement[:60]}", offset=offset)

    trailing = text[text.rfind(";") + 1 :].strip()
    if trailing:
        raise GeoParseError("statement without terminating ';'", offset=len(text) - len(trailing))
    return model


def loop_vertices(model: GeoModel) -> list[np.ndarray]:
    """Vertex coordinates of every line loop, in loop id order."""
    loops = []
    for ident in sorted(model.line_loops):
        vertices: list[tuple[float, float]] = []
        for signed in model.line_loops[ident]:
            if abs(signed) not in model.curves:
                raise GeoParseError(f"Line Loop({ident}) references undefined curve {abs(signed)}")
            ids = model.curves[abs(signed)][1]
            if signed < 0:
                ids = ids[::-1]
            for pid in ids[:-1]:
                if pid not in model.points:
                    raise GeoParseError(f"curve {abs(signed)} references undefined point {pid}")
                x, y = model.points[pid][:2]
                vertices.append((x, y))
        loops.append(np.array(vertices, dtype=np.float64).reshape(-1, 2))
    return loops
