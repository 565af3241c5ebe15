"""Synthetic shorelines and grids with known structure, for tests and demos."""

from __future__ import annotations

from typing import Optional

import numpy as np

from app.services.contours import Contour
from app.services.raster import RasterGrid


def circle(
    n: int,
    center: tuple[float, float] = (0.0, 0.0),
    radius: float = 1.0,
    id: str = "circle",
    class_tag: str = "",
    noise: float = 0.0,
    seed: Optional[int] = None,
) -> Contour:
    """Closed circle of n points, optionally with radial noise."""
    theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    r = np.full(n, radius)
    if noise:
        r = r + noise * np.random.default_rng(seed).standard_normal(n)
    points = np.column_stack((center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)))
    return Contour(points=points, closed=True, id=id, class_tag=class_tag)


def random_contour(
    n: int, closed: bool, seed: int = 0, id: str = "random", scale: float = 1.0
) -> Contour:
    """Random walk in a 10 x 10 degree box; no geometric meaning."""
    rng = np.random.default_rng(seed)
    steps = rng.standard_normal((n, 2)) * 0.1 * scale
    points = np.cumsum(steps, axis=0) + np.array([5.0, 50.0])
    return Contour(points=points, closed=closed, id=id)


def fjord_coast(
    n: int = 1000, id: str = "mainland", class_tag: str = "", seed: int = 0
) -> Contour:
    """Open coast along 60N with narrow inlets and small-scale roughness."""
    rng = np.random.default_rng(seed)
    lon = np.linspace(0.0, 10.0, n)
    inlets = sum(0.4 * np.exp(-(((lon - c) / 0.08) ** 2)) for c in (2.0, 4.5, 7.2))
    lat = 60.0 + 0.2 * np.sin(lon * 1.3) + inlets + 0.01 * rng.standard_normal(n)
    return Contour(points=np.column_stack((lon, lat)), closed=False, id=id, class_tag=class_tag)


def archipelago(
    count: int, points: int = 40, seed: int = 0, class_tag: str = "island"
) -> list[Contour]:
    """Small rough islands scattered south of the fjord coast."""
    rng = np.random.default_rng(seed)
    islands = []
    for i in range(count):
        center = (float(rng.uniform(0.5, 9.5)), float(rng.uniform(58.0, 59.5)))
        islands.append(
            circle(
                points,
                center=center,
                radius=float(rng.uniform(0.05, 0.2)),
                id=f"islet-{i}",
                class_tag=class_tag,
                noise=0.005,
                seed=seed + i + 1,
            )
        )
    return islands


def hill(
    nrows: int = 64, ncols: int = 64, amplitude: float = 100.0, sigma: float = 12.0
) -> np.ndarray:
    """Gaussian hill centred on the grid."""
    r = np.arange(nrows)[:, None] - (nrows - 1) / 2.0
    c = np.arange(ncols)[None, :] - (ncols - 1) / 2.0
    return amplitude * np.exp(-(r * r + c * c) / (2.0 * sigma * sigma))


def checkerboard(nrows: int = 64, ncols: int = 64, amplitude: float = 3.0) -> np.ndarray:
    """Cell-scale +/- amplitude pattern."""
    r = np.arange(nrows)[:, None]
    c = np.arange(ncols)[None, :]
    return amplitude * np.where((r + c) % 2 == 0, 1.0, -1.0)


def grid(values: np.ndarray, cellsize: float = 0.1, nodata: Optional[float] = None) -> RasterGrid:
    values = np.asarray(values, dtype=np.float64)
    return RasterGrid(
        nrows=values.shape[0],
        ncols=values.shape[1],
        xll=-2.0,
        yll=50.0,
        cellsize=cellsize,
        nodata=nodata,
        values=values,
    )


def hill_and_checker(n: int = 64, checker: float = 3.0) -> tuple[RasterGrid, RasterGrid]:
    """(smooth hill, hill + checkerboard) pair on an n x n grid."""
    smooth = hill(n, n)
    return grid(smooth), grid(smooth + checkerboard(n, n, checker))


def l_shaped_coast(spacing: float = 0.1, wiggle: float = 0.05) -> Contour:
    """Open mainland: east along 50N, north along 4E with a rectangular inlet to 8E."""
    corners = [(-8.0, 50.0), (4.0, 50.0), (4.0, 56.5), (8.0, 56.5), (8.0, 58.0), (4.0, 58.0), (4.0, 61.0)]
    pieces = []
    for (x0, y0), (x1, y1) in zip(corners[:-1], corners[1:]):
        length = float(np.hypot(x1 - x0, y1 - y0))
        count = max(2, int(round(length / spacing)))
        s = np.linspace(0.0, 1.0, count, endpoint=False)
        along = np.column_stack((x0 + s * (x1 - x0), y0 + s * (y1 - y0)))
        # roughness perpendicular to the side, vanishing at the corners
        normal = np.array([-(y1 - y0), x1 - x0]) / length
        bump = wiggle * np.sin(s * np.pi * count / 4.0) * np.sin(np.pi * s)
        pieces.append(along + bump[:, None] * normal)
    pieces.append(np.array([corners[-1]]))
    return Contour(points=np.vstack(pieces), closed=False, id="mainland", class_tag="mainland")
