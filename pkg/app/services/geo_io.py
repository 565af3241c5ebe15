"""GeoJSON contour documents and ESRI ASCII grids.

Closed contours never store their repeated terminal point; serialized
Polygon rings always do. Grid values go through GDAL's AAIGrid driver with
17 significant digits so every float64 survives a round trip unchanged.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from rasterio.errors import RasterioError
from rasterio.io import MemoryFile
from rasterio.transform import from_origin
from shapely.errors import GEOSException
from shapely.geometry import LineString, Polygon, mapping, shape

from app.errors import GeoParseError, InvalidInputError
from app.services.contours import Contour
from app.services.raster import RasterGrid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SUPPORTED_GEOMETRIES = ("LineString", "Polygon", "MultiPolygon")


# ──────────────────────────────────────────────
# Files
# ──────────────────────────────────────────────


def write_text_atomic(path: PathLike, text: str) -> Path:
    """Write via a temporary file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InvalidInputError(f"file not found: {path}")
    except UnicodeDecodeError as e:
        raise GeoParseError(f"{path} is not UTF-8 text", offset=e.start)


# ──────────────────────────────────────────────
# Contour documents (GeoJSON)
# ──────────────────────────────────────────────


@dataclass
class ContourDocument:
    contours: list[Contour] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for c in self.contours:
            if c.id in seen:
                raise InvalidInputError(f"duplicate contour id '{c.id}'")
            seen.add(c.id)

    def __len__(self) -> int:
        return len(self.contours)

    def by_id(self) -> dict[str, Contour]:
        return {c.id: c for c in self.contours}


def _ring_points(coords: Any) -> np.ndarray:
    points = np.asarray(coords, dtype=np.float64)[:, :2]
    if points.shape[0] > 1 and np.array_equal(points[0], points[-1]):
        points = points[:-1]
    return points


def _check_finite(raw: Any, fid: str) -> None:
    try:
        values = np.asarray(_flatten(raw), dtype=np.float64)
    except (TypeError, ValueError):
        raise GeoParseError(f"feature {fid}: coordinates are not numeric")
    if not np.all(np.isfinite(values)):
        raise InvalidInputError(f"feature {fid}: non-finite coordinate")


def _flatten(raw: Any) -> list[Any]:
    if isinstance(raw, (list, tuple)):
        out: list[Any] = []
        for item in raw:
            out.extend(_flatten(item))
        return out
    return [raw]


def _feature_contours(feature: dict, index: int) -> list[Contour]:
    properties = feature.get("properties") or {}
    fid = str(properties.get("id", index))
    class_tag = str(properties.get("class", "") or "")
    geometry = feature.get("geometry")
    if not geometry:
        logger.warning(f"Feature {fid} has no geometry; skipped")
        return []

    kind = geometry.get("type")
    if kind not in SUPPORTED_GEOMETRIES:
        logger.warning(f"Feature {fid}: unsupported geometry type {kind!r}; skipped")
        return []
    _check_finite(geometry.get("coordinates"), fid)

    try:
        geom = shape(geometry)
    except (GEOSException, ValueError, TypeError, IndexError, KeyError) as e:
        raise GeoParseError(f"feature {fid}: invalid {kind} geometry ({e})")

    if kind == "LineString":
        points = np.asarray(geom.coords, dtype=np.float64)[:, :2]
        if points.shape[0] < 2:
            logger.warning(f"Feature {fid}: LineString with fewer than 2 points; skipped")
            return []
        return [Contour(points=points, closed=False, id=fid, class_tag=class_tag)]

    polygons = [geom] if kind == "Polygon" else list(geom.geoms)
    rings = [ring for poly in polygons for ring in (poly.exterior, *poly.interiors)]
    contours = []
    for k, ring in enumerate(rings):
        cid = fid if len(rings) == 1 else f"{fid}:{k}"
        points = _ring_points(ring.coords)
        if points.shape[0] < 3:
            logger.warning(f"Feature {fid}: degenerate ring {k}; skipped")
            continue
        contours.append(Contour(points=points, closed=True, id=cid, class_tag=class_tag))
    return contours


def contours_from_geojson(source: Union[str, dict]) -> ContourDocument:
    """Interpret a FeatureCollection (text or already-decoded) as a contour document."""
    if isinstance(source, str):
        try:
            data = json.loads(source)
        except json.JSONDecodeError as e:
            offset = len(source[: e.pos].encode("utf-8"))
            raise GeoParseError(f"malformed JSON at byte {offset}: {e.msg}", offset=offset)
    else:
        data = source

    if not isinstance(data, dict) or data.get("type") != "FeatureCollection":
        raise GeoParseError("document is not a GeoJSON FeatureCollection", offset=0)
    features = data.get("features")
    if not isinstance(features, list):
        raise GeoParseError("FeatureCollection has no 'features' array", offset=0)

    contours: list[Contour] = []
    for index, feature in enumerate(features):
        if not isinstance(feature, dict) or feature.get("type") != "Feature":
            logger.warning(f"Entry {index} of 'features' is not a Feature; skipped")
            continue
        contours.extend(_feature_contours(feature, index))
    return ContourDocument(contours=contours)


def read_contours(path: PathLike) -> ContourDocument:
    doc = contours_from_geojson(_read_text(path))
    logger.info(f"Read {len(doc)} contour(s) from {path}")
    return doc


def contours_to_geojson(doc: ContourDocument) -> dict:
    features = []
    for c in doc.contours:
        geometry = Polygon(c.points) if c.closed else LineString(c.points)
        properties: dict[str, Any] = {"id": c.id}
        if c.class_tag:
            properties["class"] = c.class_tag
        features.append({"type": "Feature", "properties": properties, "geometry": mapping(geometry)})
    return {"type": "FeatureCollection", "features": features}


def write_contours(doc: ContourDocument, path: PathLike) -> Path:
    text = json.dumps(contours_to_geojson(doc), allow_nan=False)
    return write_text_atomic(path, text + "\n")


# ──────────────────────────────────────────────
# ESRI ASCII grids
# ──────────────────────────────────────────────

_HEADER_KEYS = {
    "ncols": "ncols",
    "nrows": "nrows",
    "xllcorner": "x",
    "xllcenter": "x",
    "yllcorner": "y",
    "yllcenter": "y",
    "cellsize": "cellsize",
    "nodata_value": "nodata",
}
_REQUIRED = ("ncols", "nrows", "x", "y", "cellsize")

# GDAL rounds the header to 12 decimals; values keep 17 significant digits.
_WRITE_OPTIONS = {"SIGNIFICANT_DIGITS": "17"}


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class _GridHeader:
    nrows: int
    ncols: int
    xll: float
    yll: float
    cellsize: float
    nodata: Optional[float]


def _check_grid_text(text: str) -> _GridHeader:
    """Validate the header and row layout so errors name the key or the row."""
    lines = text.splitlines()
    header: dict[str, float] = {}
    centered: set[str] = set()
    position = len(lines)
    for index, line in enumerate(lines):
        tokens = line.split()
        if not tokens:
            continue
        if _is_number(tokens[0]):
            position = index
            break
        name = tokens[0].lower()
        if name not in _HEADER_KEYS:
            raise GeoParseError(f"unknown grid header key '{tokens[0]}' on line {index + 1}")
        key = _HEADER_KEYS[name]
        if key in header:
            raise GeoParseError(f"duplicate grid header key '{tokens[0]}'")
        if len(tokens) != 2 or not _is_number(tokens[1]):
            raise GeoParseError(f"grid header key '{tokens[0]}' needs one numeric value")
        header[key] = float(tokens[1])
        if name.endswith("center"):
            centered.add(key)

    for key in _REQUIRED:
        if key not in header:
            name = {"x": "xllcorner", "y": "yllcorner"}.get(key, key)
            raise GeoParseError(f"grid header is missing '{name}'")

    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    if ncols != header["ncols"] or nrows != header["nrows"] or ncols < 1 or nrows < 1:
        raise GeoParseError("ncols and nrows must be positive integers")

    rows = [line.split() for line in lines[position:] if line.strip()]
    if len(rows) != nrows:
        raise GeoParseError(f"grid has {len(rows)} data rows, header says {nrows}")
    for r, tokens in enumerate(rows):
        if len(tokens) != ncols:
            raise GeoParseError(f"row {r} has {len(tokens)} values, expected {ncols}")
        if not all(_is_number(t) for t in tokens):
            raise GeoParseError(f"row {r} contains a non-numeric value")

    cellsize = header["cellsize"]
    return _GridHeader(
        nrows=nrows,
        ncols=ncols,
        xll=header["x"] - cellsize / 2.0 if "x" in centered else header["x"],
        yll=header["y"] - cellsize / 2.0 if "y" in centered else header["y"],
        cellsize=cellsize,
        nodata=header.get("nodata"),
    )


def raster_from_text(text: str) -> RasterGrid:
    head = _check_grid_text(text)
    try:
        with MemoryFile(text.encode("utf-8"), ext=".asc") as mem:
            with mem.open(driver="AAIGrid", DATATYPE="Float64") as src:
                values = src.read(1).astype(np.float64, copy=False)
    except RasterioError as e:
        raise GeoParseError(f"grid could not be decoded: {e}")
    if values.shape != (head.nrows, head.ncols):
        raise GeoParseError(f"grid decoded as {values.shape}, header says {head.nrows} x {head.ncols}")

    # header values come from the text itself; GDAL's transform is not bit-exact for yll
    return RasterGrid(
        nrows=head.nrows,
        ncols=head.ncols,
        xll=head.xll,
        yll=head.yll,
        cellsize=head.cellsize,
        nodata=head.nodata,
        values=values,
    )


def read_raster(path: PathLike) -> RasterGrid:
    grid = raster_from_text(_read_text(path))
    logger.info(f"Read {grid.nrows} x {grid.ncols} grid from {path}")
    return grid


def _g(value: float) -> str:
    return format(float(value), ".17g")


def _encoded_rows(g: RasterGrid) -> list[str]:
    profile = {
        "driver": "AAIGrid",
        "width": g.ncols,
        "height": g.nrows,
        "count": 1,
        "dtype": "float64",
        "transform": from_origin(g.xll, g.yll + g.nrows * g.cellsize, g.cellsize, g.cellsize),
        "nodata": g.nodata,
        **_WRITE_OPTIONS,
    }
    with MemoryFile(ext=".asc") as mem:
        with mem.open(**profile) as dst:
            dst.write(np.asarray(g.values, dtype=np.float64), 1)
        mem.seek(0)
        encoded = mem.read().decode("ascii")
    # drop GDAL's own header lines
    return [line for line in encoded.splitlines() if line.strip() and not line.lstrip()[0].isalpha()]


def _plain(token: str) -> str:
    # GDAL appends ".0" to one integral value so its reader picks a float type; %.17g never ends in ".0"
    return token[:-2] if token.endswith(".0") else token


def raster_to_text(g: RasterGrid) -> str:
    lines = [
        f"ncols {g.ncols}",
        f"nrows {g.nrows}",
        f"xllcorner {_g(g.xll)}",
        f"yllcorner {_g(g.yll)}",
        f"cellsize {_g(g.cellsize)}",
    ]
    if g.nodata is not None:
        lines.append(f"NODATA_value {_g(g.nodata)}")
    lines.extend(" ".join(_plain(t) for t in row.split()) for row in _encoded_rows(g))
    return "\n".join(lines) + "\n"


def write_raster(g: RasterGrid, path: PathLike) -> Path:
    return write_text_atomic(path, raster_to_text(g))


def read_json(path: PathLike) -> Any:
    """Decode a JSON file, reporting syntax errors with their byte offset."""
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        offset = len(text[: e.pos].encode("utf-8"))
        raise GeoParseError(f"{path}: malformed JSON at byte {offset}: {e.msg}", offset=offset)
