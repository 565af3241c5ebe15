"""Pydantic models: pipeline configuration, run reports, API requests and responses."""

from __future__ import annotations

from datetime import datetime
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ──────────────────────────────────────────────
# Shared pieces
# ──────────────────────────────────────────────


def parse_block(value: Any) -> tuple[int, int]:
    """Accept "PxQ", "P" or a two-item sequence."""
    if isinstance(value, str):
        parts = value.lower().split("x")
        if len(parts) == 1:
            parts = parts * 2
        if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
            raise ValueError(f"block must look like PxQ, got {value!r}")
        return int(parts[0]), int(parts[1])
    if isinstance(value, int):
        return value, value
    items = list(value)
    if len(items) != 2:
        raise ValueError("block needs two sizes")
    return int(items[0]), int(items[1])


class LoxodromeConfig(BaseModel):
    """One constant-bearing line; ``start`` is (lon, lat) in degrees."""

    start: tuple[float, float]
    bearing: float = Field(..., description="Degrees clockwise from north; west of north is negative")
    stop_lat: Optional[float] = None
    stop_lon: Optional[float] = None

    @model_validator(mode="after")
    def _one_stop(self) -> "LoxodromeConfig":
        if (self.stop_lat is None) == (self.stop_lon is None):
            raise ValueError("give exactly one of stop_lat or stop_lon")
        return self


class OpenBoundaryConfig(BaseModel):
    """A named open boundary: one loxodrome, a blended pair, or a named preset."""

    name: str = "open"
    loxodrome: Optional[LoxodromeConfig] = None
    blend: Optional[list[LoxodromeConfig]] = None
    preset: Optional[str] = None
    samples: Optional[int] = Field(None, ge=2)

    @model_validator(mode="after")
    def _one_source(self) -> "OpenBoundaryConfig":
        given = [x is not None for x in (self.loxodrome, self.blend, self.preset)]
        if sum(given) != 1:
            raise ValueError(f"open boundary {self.name}: give exactly one of loxodrome, blend or preset")
        if self.blend is not None and len(self.blend) != 2:
            raise ValueError(f"open boundary {self.name}: a blend needs exactly two loxodromes")
        return self


# ──────────────────────────────────────────────
# Pipeline configuration
# ──────────────────────────────────────────────


class ClassSelector(BaseModel):
    """Which input contours belong to a class. Empty selects everything."""

    model_config = ConfigDict(populate_by_name=True)

    class_tag: Optional[str] = Field(None, alias="class")
    ids: Optional[list[str]] = None
    bbox: Optional[tuple[float, float, float, float]] = Field(
        None, description="min_lon, min_lat, max_lon, max_lat applied to the contour centroid"
    )


class ShorelineClassConfig(BaseModel):
    name: str
    partition: Optional[int] = Field(None, ge=2)
    modes: Optional[int] = Field(None, ge=1)
    keep_small: bool = False
    select: ClassSelector = Field(default_factory=ClassSelector)

    @model_validator(mode="after")
    def _check_modes(self) -> "ShorelineClassConfig":
        if (self.partition is None) != (self.modes is None):
            raise ValueError(f"class {self.name}: give both partition and modes, or neither")
        if self.partition is not None and self.modes > self.partition:
            raise ValueError(f"class {self.name}: modes must not exceed partition")
        return self

    @property
    def full_resolution(self) -> bool:
        return self.partition is None


class ShorelineConfig(BaseModel):
    input: str
    output: Optional[str] = None
    classes: list[ShorelineClassConfig] = Field(..., min_length=1)

    @field_validator("classes")
    @classmethod
    def _unique_names(cls, v: list[ShorelineClassConfig]) -> list[ShorelineClassConfig]:
        names = [c.name for c in v]
        if len(set(names)) != len(names):
            raise ValueError("shoreline class names must be unique")
        return v


class BoundaryConfig(BaseModel):
    open_boundaries: list[OpenBoundaryConfig] = Field(..., min_length=1)
    seed: Optional[tuple[float, float]] = None
    output: Optional[str] = None

    @field_validator("open_boundaries")
    @classmethod
    def _unique_names(cls, v: list[OpenBoundaryConfig]) -> list[OpenBoundaryConfig]:
        names = [b.name for b in v]
        if len(set(names)) != len(names):
            raise ValueError("open boundary names must be unique")
        return v


class GradationRuleConfig(BaseModel):
    """Size rule for one shoreline class, given directly or as a named preset.

    Values given next to a preset override the preset's.
    """

    model_config = ConfigDict(populate_by_name=True)

    class_id: str = Field(..., alias="class")
    preset: Optional[str] = Field(None, description="p500k1, p100k1, p100k5 or full")
    h_min: Optional[float] = Field(None, gt=0)
    plateau: Optional[float] = Field(None, ge=0)
    ramp: Optional[float] = Field(None, gt=0)
    h_max: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _min_size_given(self) -> "GradationRuleConfig":
        if self.preset is None and self.h_min is None:
            raise ValueError(f"rule for class {self.class_id}: give h_min or a preset")
        return self


class GradationConfig(BaseModel):
    rules: list[GradationRuleConfig] = Field(default_factory=list)
    max_edge_length: Optional[float] = Field(None, gt=0)
    curve_type: Optional[Literal["line", "spline"]] = None
    geo_output: Optional[str] = None


class RasterConfig(BaseModel):
    """Raster stage. ``sweep`` writes one grid per mode count instead of a single ``modes`` grid."""

    input: str
    output: Optional[str] = None
    block: tuple[int, int] = (8, 8)
    modes: Optional[int] = Field(None, ge=0)
    sweep: Optional[list[int]] = Field(None, min_length=1)
    fill_nodata: bool = False

    @field_validator("block", mode="before")
    @classmethod
    def _parse_block(cls, v: Any) -> tuple[int, int]:
        return parse_block(v)

    @model_validator(mode="after")
    def _check_modes(self) -> "RasterConfig":
        p, q = self.block
        if p < 1 or q < 1:
            raise ValueError("block sizes must be positive")
        if (self.modes is None) == (self.sweep is None):
            raise ValueError("give exactly one of modes or sweep")
        for k in [self.modes] if self.sweep is None else self.sweep:
            if not 0 <= k <= p * q:
                raise ValueError(f"modes must be in [0, {p * q}] for a {p}x{q} block, got {k}")
        return self


class PipelineConfig(BaseModel):
    """The single JSON document driving the ``pipeline`` command."""

    shorelines: ShorelineConfig
    boundary: Optional[BoundaryConfig] = None
    gradation: Optional[GradationConfig] = None
    raster: Optional[RasterConfig] = None
    workers: Optional[int] = Field(None, ge=1)
    out_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_references(self) -> "PipelineConfig":
        names = {c.name for c in self.shorelines.classes}
        if self.gradation is not None:
            for rule in self.gradation.rules:
                if rule.class_id not in names:
                    raise ValueError(f"gradation rule refers to unknown class '{rule.class_id}'")
        return self


# ──────────────────────────────────────────────
# Run reports
# ──────────────────────────────────────────────


class ErrorDetail(BaseModel):
    """Error detail model."""

    code: str
    message: str
    details: Optional[str] = None


class ClassReport(BaseModel):
    name: str
    partition: Optional[int] = None
    modes: Optional[int] = None
    input: int = 0
    kept: int = 0
    dropped: list[str] = Field(default_factory=list)
    failed: dict[str, str] = Field(default_factory=dict)
    variance_fraction: Optional[float] = Field(
        None, description="Mean share of variance kept by the truncation"
    )


class BoundaryReport(BaseModel):
    open_lines: list[str] = Field(default_factory=list)
    loops: int = 0
    islands: int = 0
    segments: int = 0


class SweepStep(BaseModel):
    modes: int
    variance_fraction: float
    rms_change: float = Field(..., description="RMS difference against the (filled) input grid")
    output: Optional[str] = None


class RasterReport(BaseModel):
    nrows: int
    ncols: int
    block: tuple[int, int]
    modes: int
    variance_fraction: float
    rms_change: float
    filled_cells: int = 0
    sweep: list[SweepStep] = Field(default_factory=list)


class RunReport(BaseModel):
    """Single JSON object printed on stdout by every command."""

    tool: str
    version: str
    command: str
    status: Literal["ok", "error"] = "ok"
    classes: list[ClassReport] = Field(default_factory=list)
    unassigned: list[str] = Field(default_factory=list)
    boundary: Optional[BoundaryReport] = None
    raster: Optional[RasterReport] = None
    size: Optional[float] = None
    outputs: dict[str, str] = Field(default_factory=dict)
    error: Optional[ErrorDetail] = None
    elapsed_seconds: float = 0.0


# ──────────────────────────────────────────────
# API requests
# ──────────────────────────────────────────────


class ContourSimplifyRequest(BaseModel):
    """Simplify every contour of a GeoJSON FeatureCollection."""

    collection: dict[str, Any] = Field(..., description="GeoJSON FeatureCollection")
    partition: int = Field(..., ge=2, description="Points per partition (p)")
    modes: int = Field(..., ge=1, description="Modes kept (k <= p)")
    keep_small: bool = Field(False, description="Pass undersized contours through unchanged")

    model_config = {
        "json_schema_extra": {
            "examples": [
                {
                    "collection": {"type": "FeatureCollection", "features": []},
                    "partition": 100,
                    "modes": 1,
                    "keep_small": False,
                }
            ]
        }
    }


class GridPayload(BaseModel):
    nrows: int = Field(..., ge=1)
    ncols: int = Field(..., ge=1)
    xll: float = 0.0
    yll: float = 0.0
    cellsize: float = Field(1.0, gt=0)
    nodata: Optional[float] = None
    values: list[list[float]]


class RasterSimplifyRequest(BaseModel):
    grid: GridPayload
    block: tuple[int, int] = (8, 8)
    modes: int = Field(..., ge=0)
    fill_nodata: bool = False

    @field_validator("block", mode="before")
    @classmethod
    def _parse_block(cls, v: Any) -> tuple[int, int]:
        return parse_block(v)


class LoxodromeRequest(OpenBoundaryConfig):
    """Sample one loxodrome, a blended pair or a preset."""


class ProbeRule(GradationRuleConfig):
    collection: dict[str, Any] = Field(..., description="Shorelines the rule grades from")


class SizeProbeRequest(BaseModel):
    point: tuple[float, float] = Field(..., description="(lon, lat) in degrees")
    rules: list[ProbeRule] = Field(..., min_length=1)


# ──────────────────────────────────────────────
# API responses
# ──────────────────────────────────────────────


class ContourSimplifyData(BaseModel):
    collection: dict[str, Any]
    report: ClassReport


class ContourSimplifyResponse(BaseModel):
    success: bool = True
    data: ContourSimplifyData
    cached: bool = False
    timestamp: datetime = Field(default_factory=datetime.utcnow)


class RasterSimplifyData(BaseModel):
    grid: GridPayload
    modes: int
    variance_fraction: float


class RasterSimplifyResponse(BaseModel):
    success: bool = True
    data: RasterSimplifyData
    cached: bool = False
    timestamp: datetime = Field(default_factory=datetime.utcnow)


class LoxodromeData(BaseModel):
    name: str
    count: int
    points: list[tuple[float, float]]


class LoxodromeResponse(BaseModel):
    success: bool = True
    data: LoxodromeData
    cached: bool = False
    timestamp: datetime = Field(default_factory=datetime.utcnow)


class SizeProbeData(BaseModel):
    point: tuple[float, float]
    size: float = Field(..., description="Target edge length in degrees")


class SizeProbeResponse(BaseModel):
    success: bool = True
    data: SizeProbeData
    cached: bool = False
    timestamp: datetime = Field(default_factory=datetime.utcnow)


class ErrorResponse(BaseModel):
    """Standard error response."""

    success: bool = False
    error: ErrorDetail
    timestamp: datetime = Field(default_factory=datetime.utcnow)


class HealthResponse(BaseModel):
    """Health check response."""

    status: str = "healthy"
    version: str
    uptime_seconds: float
    cache_entries: int = 0
    timestamp: datetime = Field(default_factory=datetime.utcnow)
