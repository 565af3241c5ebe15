"""CoastPCA HTTP service.

FastAPI application exposing the simplification, loxodrome and size-field
services, with request logging, rate limiting and health checks.
"""

from __future__ import annotations

import logging
import time
import uuid
from contextlib import asynccontextmanager
from datetime import datetime

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from slowapi import Limiter, _rate_limit_exceeded_handler
from slowapi.errors import RateLimitExceeded
from slowapi.middleware import SlowAPIMiddleware
from slowapi.util import get_remote_address
from starlette.exceptions import HTTPException as StarletteHTTPException
from starlette.middleware.gzip import GZipMiddleware

from app.config import configure_logging, get_settings
from app.models import ErrorDetail, ErrorResponse, HealthResponse
from app.routes.v1 import router as v1_router
from app.services.cache import cache_size, clear_cache

settings = get_settings()

configure_logging()
logger = logging.getLogger("coastpca")

API_PREFIX = "/api/"

# ──────────────────────────────────────────────
# Rate Limiting
# ──────────────────────────────────────────────

limiter = Limiter(
    key_func=get_remote_address,
    default_limits=[settings.default_rate_limit],
    enabled=settings.rate_limit_enabled,
)

# ──────────────────────────────────────────────
# App Lifecycle
# ──────────────────────────────────────────────

_start_time: float | None = None


@asynccontextmanager
async def lifespan(app: FastAPI):
    global _start_time
    _start_time = time.time()
    logger.info(f"Starting {settings.app_name} v{settings.app_version} ({settings.app_env})")
    yield
    logger.info(f"Stopping with {cache_size()} cached results")
    clear_cache()


# ──────────────────────────────────────────────
# FastAPI App
# ──────────────────────────────────────────────

API_DESCRIPTION = """
## Shoreline and bathymetry simplification for ocean meshing

### Endpoints

| Endpoint | Description |
|---|---|
| **POST /api/v1/simplify/contours** | PCA simplification of GeoJSON shoreline contours |
| **POST /api/v1/simplify/raster** | PCA simplification of a bathymetry grid |
| **POST /api/v1/loxodrome** | Sample a constant-bearing open boundary, a blend or a preset |
| **POST /api/v1/sizefield/probe** | Target mesh edge length at a point |

Coordinates are (longitude, latitude) in degrees. Sizes and distances are in degrees of arc.

### Response Format

```json
{
  "success": true,
  "data": { ... },
  "cached": false,
  "timestamp": "2026-02-11T00:00:00Z"
}
```
"""

app = FastAPI(
    title=settings.app_name,
    description=API_DESCRIPTION,
    version=settings.app_version,
    docs_url="/docs",
    redoc_url="/redoc",
    openapi_url="/openapi.json",
    lifespan=lifespan,
)

# ──────────────────────────────────────────────
# Middleware
# ──────────────────────────────────────────────

# grids and contour sets compress well
app.add_middleware(GZipMiddleware, minimum_size=500)

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins_list,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.state.limiter = limiter
app.add_exception_handler(RateLimitExceeded, _rate_limit_exceeded_handler)
app.add_middleware(SlowAPIMiddleware)


@app.middleware("http")
async def request_middleware(request: Request, call_next):
    """Request ID, response timing and one log line per API call."""
    request_id = request.headers.get("X-Request-ID") or uuid.uuid4().hex[:12]
    is_api = request.url.path.startswith(API_PREFIX)

    started = time.perf_counter()
    response = await call_next(request)
    elapsed = time.perf_counter() - started

    response.headers.update(
        {
            "X-Request-ID": request_id,
            "X-Response-Time": f"{elapsed:.3f}s",
            "X-Content-Type-Options": "nosniff",
            "Cache-Control": "no-store" if is_api else "public, max-age=60",
        }
    )
    if is_api:
        logger.info(
            f"{request.method} {request.url.path} status={response.status_code} "
            f"time={elapsed:.3f}s rid={request_id}"
        )
    return response


# ──────────────────────────────────────────────
# Routes
# ──────────────────────────────────────────────

app.include_router(v1_router)


# ──────────────────────────────────────────────
# Health & Meta Endpoints
# ──────────────────────────────────────────────


@app.get("/", summary="API Info", tags=["Meta"])
async def root():
    return {
        "name": settings.app_name,
        "version": settings.app_version,
        "description": "PCA shoreline simplification, open boundaries and mesh size fields",
        "documentation": "/docs",
        "endpoints": {
            "contours": "/api/v1/simplify/contours",
            "raster": "/api/v1/simplify/raster",
            "loxodrome": "/api/v1/loxodrome",
            "sizefield": "/api/v1/sizefield/probe",
        },
    }


@app.get(
    "/health",
    response_model=HealthResponse,
    summary="Health Check",
    description="Service status, version, uptime and cached result count.",
    tags=["Meta"],
)
async def health_check():
    uptime = 0.0 if _start_time is None else time.time() - _start_time
    return HealthResponse(
        status="healthy",
        version=settings.app_version,
        uptime_seconds=round(uptime, 2),
        cache_entries=cache_size(),
        timestamp=datetime.utcnow(),
    )


# ──────────────────────────────────────────────
# Exception Handlers
# ──────────────────────────────────────────────


def _error_response(status: int, code: str, message: str, details: str | None = None) -> JSONResponse:
    body = ErrorResponse(error=ErrorDetail(code=code, message=message, details=details))
    return JSONResponse(status_code=status, content=body.model_dump(mode="json"))


_STATUS_CODES = {404: "NOT_FOUND", 405: "METHOD_NOT_ALLOWED", 429: "RATE_LIMITED"}


@app.exception_handler(StarletteHTTPException)
async def http_exception_handler(request: Request, exc: StarletteHTTPException):
    """Route errors carry an ErrorDetail dict; routing errors only a status and a phrase."""
    if isinstance(exc.detail, dict) and "code" in exc.detail:
        error = ErrorDetail(**exc.detail)
    else:
        error = ErrorDetail(code=_STATUS_CODES.get(exc.status_code, "HTTP_ERROR"), message=str(exc.detail))
    return JSONResponse(
        status_code=exc.status_code,
        content=ErrorResponse(error=error).model_dump(mode="json"),
        headers=getattr(exc, "headers", None),
    )


@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    logger.error(f"Unhandled exception on {request.method} {request.url.path}: {exc}", exc_info=True)
    return _error_response(
        500,
        "INTERNAL_ERROR",
        "An unexpected error occurred.",
        str(exc) if settings.app_debug else None,
    )


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    """Body validation failures use the same envelope as service errors."""
    return _error_response(
        422,
        "VALIDATION_ERROR",
        "Request body failed validation.",
        str(exc.errors()),
    )
