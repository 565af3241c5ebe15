"""Application configuration using pydantic-settings."""

import logging
from functools import lru_cache
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
    )

    # App
    app_name: str = "CoastPCA"
    app_version: str = "1.0.0"
    app_env: str = "production"
    app_debug: bool = False
    log_level: str = "info"

    # Numerics
    workers: int = 1
    jacobi_tolerance: float = 1e-12
    jacobi_max_sweeps: int = 100
    covariance_chunk: int = 2048  # columns per partial product; never derived from workers

    # Geometry
    loxodrome_samples: int = 200
    pole_limit: float = 89.0
    snap_tolerance: float = 1e-9

    # Mesh-generator export
    max_edge_length: float = 1.5  # degrees
    geo_curve_type: Literal["line", "spline"] = "line"
    distance_sampling: int = 100

    # HTTP service
    cors_origins: str = "*"
    cache_ttl: int = 3600
    default_rate_limit: str = "30/minute"
    rate_limit_enabled: bool = True
    max_grid_cells: int = 1_000_000

    @property
    def cors_origins_list(self) -> list[str]:
        return [origin.strip() for origin in self.cors_origins.split(",")]


@lru_cache
def get_settings() -> Settings:
    """Cached settings instance."""
    return Settings()


def configure_logging(level: str | None = None) -> None:
    """Install the shared log format on the root logger (stderr)."""
    name = (level or get_settings().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.INFO),
        format=LOG_FORMAT,
    )
