"""API v1 routes.

Every endpoint runs the same services as the CLI:
- Domain errors map to 400/422 with their stable error code
- Numerical failures map to 500 NUMERICAL_FAILURE
- Results are cached by a hash of the request body
"""

from __future__ import annotations

import asyncio
import logging
import time
from datetime import datetime

import numpy as np
from fastapi import APIRouter, HTTPException

from app.config import get_settings
from app.errors import (
    CoastError,
    DimensionMismatchError,
    GeoParseError,
    InvalidArgumentError,
    NumericalFailureError,
)
from app.models import (
    ClassReport,
    ContourSimplifyData,
    ContourSimplifyRequest,
    ContourSimplifyResponse,
    ErrorDetail,
    ErrorResponse,
    GridPayload,
    LoxodromeData,
    LoxodromeRequest,
    LoxodromeResponse,
    RasterSimplifyData,
    RasterSimplifyRequest,
    RasterSimplifyResponse,
    SizeProbeData,
    SizeProbeRequest,
    SizeProbeResponse,
)
from app.services import cache
from app.services.boundary import GeoPoint
from app.services.contours import simplify_contour_set
from app.services.geo_io import ContourDocument, contours_from_geojson, contours_to_geojson
from app.services.pipeline import build_open_line, gradation_rules, simplify_grid
from app.services.raster import RasterGrid
from app.services.size_field import evaluate_size

logger = logging.getLogger("coastpca.routes")
settings = get_settings()

router = APIRouter(prefix="/api/v1", tags=["CoastPCA API v1"])

_ERROR_RESPONSES = {
    400: {"model": ErrorResponse, "description": "Invalid input"},
    422: {"model": ErrorResponse, "description": "Validation error"},
    500: {"model": ErrorResponse, "description": "Numerical failure"},
}


# ──────────────────────────────────────────────
# Shared error-handling helper
# ──────────────────────────────────────────────


def _handle_error(e: Exception, endpoint: str) -> HTTPException:
    """Convert service exceptions into HTTP errors."""
    if isinstance(e, NumericalFailureError):
        logger.error(f"[{endpoint}] {e.reason}")
        return HTTPException(
            status_code=500,
            detail=ErrorDetail(code=e.code, message=e.reason).model_dump(),
        )
    if isinstance(e, (InvalidArgumentError, DimensionMismatchError)):
        return HTTPException(
            status_code=422,
            detail=ErrorDetail(code=e.code, message=e.reason).model_dump(),
        )
    if isinstance(e, CoastError):
        details = None
        if isinstance(e, GeoParseError) and e.offset is not None:
            details = f"byte offset {e.offset}"
        return HTTPException(
            status_code=400,
            detail=ErrorDetail(code=e.code, message=e.reason, details=details).model_dump(),
        )

    logger.error(f"[{endpoint}] Unhandled error: {e}", exc_info=True)
    return HTTPException(
        status_code=500,
        detail=ErrorDetail(
            code=f"{endpoint.upper()}_FAILED",
            message=f"An unexpected error occurred during {endpoint}.",
            details=str(e) if settings.app_debug else None,
        ).model_dump(),
    )


def _grid_from_payload(payload: GridPayload) -> RasterGrid:
    cells = payload.nrows * payload.ncols
    if cells > settings.max_grid_cells:
        raise InvalidArgumentError(
            f"grid has {cells} cells; this service accepts at most {settings.max_grid_cells}"
        )
    return RasterGrid(
        nrows=payload.nrows,
        ncols=payload.ncols,
        xll=payload.xll,
        yll=payload.yll,
        cellsize=payload.cellsize,
        nodata=payload.nodata,
        values=np.asarray(payload.values, dtype=np.float64),
    )


def _payload_from_grid(g: RasterGrid) -> GridPayload:
    return GridPayload(
        nrows=g.nrows,
        ncols=g.ncols,
        xll=g.xll,
        yll=g.yll,
        cellsize=g.cellsize,
        nodata=g.nodata,
        values=g.values.tolist(),
    )


# ──────────────────────────────────────────────
# Contour simplification
# ──────────────────────────────────────────────


@router.post(
    "/simplify/contours",
    response_model=ContourSimplifyResponse,
    summary="Simplify shoreline contours",
    description=(
        "Reconstruct every contour of a GeoJSON FeatureCollection from its first k PCA modes "
        "over overlapping p-point partitions. Contours shorter than p are dropped unless "
        "keep_small is set."
    ),
    responses=_ERROR_RESPONSES,
)
async def simplify_contours_endpoint(request: ContourSimplifyRequest):
    payload = request.model_dump()
    cached = cache.get_cached("contours", payload)
    if cached:
        return ContourSimplifyResponse(data=cached, cached=True, timestamp=datetime.utcnow())

    start = time.time()
    try:
        doc = contours_from_geojson(request.collection)
        outcome = await asyncio.to_thread(
            simplify_contour_set, doc.contours, request.partition, request.modes, request.keep_small
        )
    except HTTPException:
        raise
    except Exception as e:
        raise _handle_error(e, "simplification")

    data = ContourSimplifyData(
        collection=contours_to_geojson(ContourDocument(contours=outcome.contours)),
        report=ClassReport(
            name="request",
            partition=request.partition,
            modes=request.modes,
            input=len(doc),
            kept=len(outcome.contours),
            dropped=outcome.dropped,
            failed=outcome.failed,
            variance_fraction=outcome.mean_variance_fraction,
        ),
    )
    cache.set_cached("contours", payload, data.model_dump(mode="json"))
    logger.info(
        f"[contours] p={request.partition} k={request.modes} "
        f"kept={data.report.kept}/{data.report.input} ms={int((time.time() - start) * 1000)}"
    )
    return ContourSimplifyResponse(data=data, timestamp=datetime.utcnow())


# ──────────────────────────────────────────────
# Raster simplification
# ──────────────────────────────────────────────


@router.post(
    "/simplify/raster",
    response_model=RasterSimplifyResponse,
    summary="Simplify a bathymetry grid",
    description="Reconstruct a grid from k PCA modes of its overlapping p x q blocks.",
    responses=_ERROR_RESPONSES,
)
async def simplify_raster_endpoint(request: RasterSimplifyRequest):
    payload = request.model_dump()
    cached = cache.get_cached("raster", payload)
    if cached:
        return RasterSimplifyResponse(data=cached, cached=True, timestamp=datetime.utcnow())

    try:
        grid = _grid_from_payload(request.grid)
        simplified, report = await asyncio.to_thread(
            simplify_grid, grid, request.block, request.modes, request.fill_nodata
        )
    except HTTPException:
        raise
    except Exception as e:
        raise _handle_error(e, "simplification")

    data = RasterSimplifyData(
        grid=_payload_from_grid(simplified),
        modes=request.modes,
        variance_fraction=report.variance_fraction,
    )
    cache.set_cached("raster", payload, data.model_dump(mode="json"))
    logger.info(
        f"[raster] {grid.nrows}x{grid.ncols} block={request.block} k={request.modes} "
        f"variance={report.variance_fraction:.4f}"
    )
    return RasterSimplifyResponse(data=data, timestamp=datetime.utcnow())


# ──────────────────────────────────────────────
# Loxodromes
# ──────────────────────────────────────────────


@router.post(
    "/loxodrome",
    response_model=LoxodromeResponse,
    summary="Sample an open boundary",
    description="Sample a loxodrome, blend a pair of loxodromes, or sample a named preset.",
    responses=_ERROR_RESPONSES,
)
async def loxodrome_endpoint(request: LoxodromeRequest):
    payload = request.model_dump()
    cached = cache.get_cached("loxodrome", payload)
    if cached:
        return LoxodromeResponse(data=cached, cached=True, timestamp=datetime.utcnow())

    try:
        line = build_open_line(request)
    except Exception as e:
        raise _handle_error(e, "loxodrome")

    data = LoxodromeData(
        name=request.name,
        count=int(line.shape[0]),
        points=[(float(x), float(y)) for x, y in line],
    )
    cache.set_cached("loxodrome", payload, data.model_dump(mode="json"))
    return LoxodromeResponse(data=data, timestamp=datetime.utcnow())


# ──────────────────────────────────────────────
# Size field
# ──────────────────────────────────────────────


@router.post(
    "/sizefield/probe",
    response_model=SizeProbeResponse,
    summary="Evaluate the mesh size field",
    description="Target edge length (degrees) at one point under distance-graded shoreline rules.",
    responses=_ERROR_RESPONSES,
)
async def sizefield_probe_endpoint(request: SizeProbeRequest):
    payload = request.model_dump()
    cached = cache.get_cached("sizefield", payload)
    if cached:
        return SizeProbeResponse(data=cached, cached=True, timestamp=datetime.utcnow())

    try:
        rules = gradation_rules(request.rules, settings.max_edge_length)
        bindings = [
            (rule, contours_from_geojson(spec.collection).contours)
            for rule, spec in zip(rules, request.rules)
        ]
        size = await asyncio.to_thread(evaluate_size, GeoPoint(*request.point), bindings)
    except HTTPException:
        raise
    except Exception as e:
        raise _handle_error(e, "sizefield")

    data = SizeProbeData(point=request.point, size=size)
    cache.set_cached("sizefield", payload, data.model_dump(mode="json"))
    return SizeProbeResponse(data=data, timestamp=datetime.utcnow())
