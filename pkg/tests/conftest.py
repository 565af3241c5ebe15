"""Shared fixtures."""

from __future__ import annotations

import json
import os

# must be set before app.config builds its cached settings
os.environ.setdefault("RATE_LIMIT_ENABLED", "false")
os.environ.setdefault("LOG_LEVEL", "warning")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from app.services import synthetic  # noqa: E402
from app.services.boundary import (  # noqa: E402
    GeoPoint,
    LoxodromeSpec,
    blend_loxodromes,
    sample_loxodrome,
)
from app.services.cache import clear_cache  # noqa: E402
from app.services.contours import Contour  # noqa: E402
from app.services.geo_io import ContourDocument, write_contours, write_raster  # noqa: E402


@pytest.fixture(autouse=True)
def _fresh_cache():
    clear_cache()
    yield
    clear_cache()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def demo_shorelines():
    """L-shaped mainland with an inlet, one island and one islet."""
    return [
        synthetic.l_shaped_coast(),
        synthetic.circle(80, center=(-2.0, 57.0), radius=0.5, id="orkney", class_tag="island"),
        synthetic.circle(10, center=(0.0, 53.0), radius=0.1, id="islet", class_tag="island"),
    ]


@pytest.fixture
def demo_open_lines():
    """West, north (blended) and inlet open boundaries around the demo coast."""
    west = sample_loxodrome(LoxodromeSpec(GeoPoint(-7.0, 49.0), bearing=0.0, stop_lat=61.5))
    north = blend_loxodromes(
        sample_loxodrome(LoxodromeSpec(GeoPoint(-8.0, 59.0), bearing=-20.0, stop_lat=61.0)),
        sample_loxodrome(LoxodromeSpec(GeoPoint(5.0, 59.5), bearing=0.0, stop_lat=61.0)),
    )
    inlet = sample_loxodrome(LoxodromeSpec(GeoPoint(5.0, 56.0), bearing=0.0, stop_lat=58.5))
    return {"west": west, "north": north, "inlet": inlet}


@pytest.fixture
def demo_seed():
    return GeoPoint(-2.0, 55.0)


def _demo_config() -> dict:
    return {
        "shorelines": {
            "input": "coast.geojson",
            "output": "out/shorelines.geojson",
            "classes": [
                {"name": "mainland", "select": {"class": "mainland"}},
                {"name": "islands", "partition": 40, "modes": 2, "select": {"class": "island"}},
            ],
        },
        "boundary": {
            "open_boundaries": [
                {"name": "west", "loxodrome": {"start": [-7.0, 49.0], "bearing": 0.0, "stop_lat": 61.5}},
                {
                    "name": "north",
                    "blend": [
                        {"start": [-8.0, 59.0], "bearing": -20.0, "stop_lat": 61.0},
                        {"start": [5.0, 59.5], "bearing": 0.0, "stop_lat": 61.0},
                    ],
                },
                {"name": "inlet", "loxodrome": {"start": [5.0, 56.0], "bearing": 0.0, "stop_lat": 58.5}},
            ],
            "seed": [-2.0, 55.0],
            "output": "out/boundary.geojson",
        },
        "gradation": {
            "rules": [
                {"class": "mainland", "h_min": 0.05, "plateau": 0.02, "ramp": 1.0},
                {"class": "islands", "h_min": 0.02, "plateau": 0.02, "ramp": 0.5},
            ],
            "geo_output": "out/domain.geo",
        },
        "raster": {"input": "bathymetry.asc", "output": "out/bathymetry.asc", "block": "4x4", "modes": 2},
    }


@pytest.fixture
def demo_config():
    """Pipeline config for the files written by ``demo_workspace``."""
    return _demo_config()


@pytest.fixture
def demo_workspace(tmp_path, demo_shorelines):
    """Coast, grid and config.json written to a temporary directory."""
    buoy = Contour(points=[[1.0, 52.0], [1.1, 52.0]], closed=False, id="buoy", class_tag="marker")
    write_contours(ContourDocument(contours=[*demo_shorelines, buoy]), tmp_path / "coast.geojson")
    _, noisy = synthetic.hill_and_checker(16)
    write_raster(noisy, tmp_path / "bathymetry.asc")
    (tmp_path / "config.json").write_text(json.dumps(_demo_config()), encoding="utf-8")
    return tmp_path
