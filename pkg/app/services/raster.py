"""Bathymetry raster simplification by PCA over overlapping p x q blocks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from app.errors import (
    DimensionMismatchError,
    InvalidArgumentError,
    InvalidInputError,
    NodataUnsupportedError,
    TooSmallError,
)
from app.services.pca import Decomposition, decompose

logger = logging.getLogger(__name__)


# ──────────────────────────────────────────────
# Types
# ──────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class RasterGrid:
    """Elevation grid (metres, positive up) with an ESRI-style header.

    ``values[0]`` is the northernmost row; ``xll``/``yll`` is the lower-left
    corner of the lower-left cell.
    """

    nrows: int
    ncols: int
    xll: float
    yll: float
    cellsize: float
    nodata: Optional[float]
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if self.nrows < 1 or self.ncols < 1:
            raise InvalidInputError("grid must have at least one row and column")
        if values.shape != (self.nrows, self.ncols):
            raise DimensionMismatchError(
                f"values {values.shape} do not match header {self.nrows} x {self.ncols}"
            )
        if not self.cellsize > 0:
            raise InvalidInputError(f"cellsize must be positive, got {self.cellsize}")
        if not np.all(np.isfinite(values[~self.nodata_mask_of(values)])):
            raise InvalidInputError("grid has non-finite values outside the nodata mask")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def nodata_mask_of(self, values: np.ndarray) -> np.ndarray:
        if self.nodata is None:
            return np.zeros(values.shape, dtype=bool)
        return values == self.nodata

    @property
    def nodata_mask(self) -> np.ndarray:
        return self.nodata_mask_of(self.values)

    def header(self) -> tuple:
        return (self.nrows, self.ncols, self.xll, self.yll, self.cellsize, self.nodata)

    def with_values(self, values: np.ndarray) -> "RasterGrid":
        return replace(self, values=values)


@dataclass(frozen=True)
class BlockLayout:
    """Every stride-1 p x q block anchor, row-major."""

    block_rows: int
    block_cols: int
    nrows: int
    ncols: int

    @property
    def anchor_rows(self) -> int:
        return self.nrows - self.block_rows + 1

    @property
    def anchor_cols(self) -> int:
        return self.ncols - self.block_cols + 1

    @property
    def m(self) -> int:
        return self.anchor_rows * self.anchor_cols

    @property
    def anchors(self) -> list[tuple[int, int]]:
        return [(r, c) for r in range(self.anchor_rows) for c in range(self.anchor_cols)]

    def cell_indices(self) -> np.ndarray:
        """(M, p*q) flat cell index of every block cell, anchors in row-major order."""
        rows, cols = np.divmod(np.arange(self.m), self.anchor_cols)
        block_r, block_c = np.divmod(np.arange(self.block_rows * self.block_cols), self.block_cols)
        r = rows[:, None] + block_r[None, :]
        c = cols[:, None] + block_c[None, :]
        return r * self.ncols + c


@dataclass
class RasterSimplification:
    grid: RasterGrid
    variance_fraction: float
    modes: int
    rms_change: float = 0.0  # RMS difference against the input grid


# ──────────────────────────────────────────────
# Operations
# ──────────────────────────────────────────────


def partition_raster(g: RasterGrid, p: int, q: int) -> tuple[np.ndarray, BlockLayout]:
    """Stack every p x q block (flattened row-major) as one column."""
    if p < 1 or q < 1:
        raise InvalidArgumentError(f"block must be at least 1 x 1, got {p} x {q}")
    if p > g.nrows or q > g.ncols:
        raise TooSmallError(
            f"grid {g.nrows} x {g.ncols} is smaller than the {p} x {q} block",
            size=g.nrows * g.ncols,
            required=p * q,
        )
    mask = g.nodata_mask
    if mask.any():
        row, col = np.argwhere(mask)[0]
        raise NodataUnsupportedError(
            f"{int(mask.sum())} nodata cell(s) inside block coverage, first at row {row}, "
            f"column {col}; fill them first"
        )
    layout = BlockLayout(block_rows=p, block_cols=q, nrows=g.nrows, ncols=g.ncols)
    blocks = sliding_window_view(g.values, (p, q))
    windows = blocks.reshape(layout.m, p * q).T.copy()
    return windows, layout


def assemble_raster(recon: np.ndarray, layout: BlockLayout, header: RasterGrid) -> RasterGrid:
    """Average every cell over the blocks covering it, summing in ascending anchor order."""
    n = layout.block_rows * layout.block_cols
    recon = np.asarray(recon, dtype=np.float64)
    if recon.shape != (n, layout.m):
        raise DimensionMismatchError(
            f"reconstruction {recon.shape} does not match layout ({n}, {layout.m})"
        )
    if (header.nrows, header.ncols) != (layout.nrows, layout.ncols):
        raise DimensionMismatchError("header does not match block layout")
    idx = layout.cell_indices().ravel()
    cells = layout.nrows * layout.ncols
    sums = np.bincount(idx, weights=recon.T.ravel(), minlength=cells)
    counts = np.bincount(idx, minlength=cells)
    return header.with_values((sums / counts).reshape(layout.nrows, layout.ncols))


def _check_modes(p: int, q: int, k: int) -> None:
    if not 0 <= k <= p * q:
        raise InvalidArgumentError(f"mode count must be in [0, {p * q}], got {k}")


def decompose_raster(
    g: RasterGrid, p: int, q: int, workers: Optional[int] = None
) -> tuple[Decomposition, BlockLayout]:
    windows, layout = partition_raster(g, p, q)
    return decompose(windows, workers=workers), layout


def _truncation(
    g: RasterGrid, decomposition: Decomposition, layout: BlockLayout, k: int
) -> RasterSimplification:
    grid = assemble_raster(decomposition.reconstruct(k), layout, g)
    return RasterSimplification(
        grid=grid,
        variance_fraction=decomposition.variance_fraction(k),
        modes=k,
        rms_change=rms_difference(grid, g),
    )


def simplify_raster_report(
    g: RasterGrid, p: int, q: int, k: int, workers: Optional[int] = None
) -> RasterSimplification:
    _check_modes(p, q, k)
    decomposition, layout = decompose_raster(g, p, q, workers=workers)
    return _truncation(g, decomposition, layout, k)


def simplify_raster(
    g: RasterGrid, p: int, q: int, k: int, workers: Optional[int] = None
) -> RasterGrid:
    """Reconstruct a grid from the first k block modes; header unchanged."""
    return simplify_raster_report(g, p, q, k, workers=workers).grid


def simplify_raster_sweep(
    g: RasterGrid, p: int, q: int, ks: Iterable[int], workers: Optional[int] = None
) -> dict[int, RasterSimplification]:
    """Several truncations from a single decomposition, each with its RMS change."""
    ks = sorted(set(ks))
    for k in ks:
        _check_modes(p, q, k)
    decomposition, layout = decompose_raster(g, p, q, workers=workers)
    return {k: _truncation(g, decomposition, layout, k) for k in ks}


def rms_difference(a: RasterGrid, b: RasterGrid) -> float:
    return float(np.sqrt(np.mean((a.values - b.values) ** 2)))


def fill_nodata(g: RasterGrid) -> RasterGrid:
    """Replace nodata cells by their nearest valid neighbour."""
    mask = g.nodata_mask
    if not mask.any():
        return g
    if mask.all():
        raise NodataUnsupportedError("every cell is nodata; nothing to fill from")
    indices = ndimage.distance_transform_edt(mask, return_distances=False, return_indices=True)
    filled = g.values[tuple(indices)]
    logger.info(f"Filled {int(mask.sum())} nodata cell(s) from nearest neighbours")
    return g.with_values(filled)
