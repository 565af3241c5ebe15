"""Shoreline contour simplification by PCA over overlapping point windows.

x and y are decomposed separately. Every window is one column of the
sample matrix; after truncated reconstruction each point is the mean of its
value across all windows that cover it.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from app.config import get_settings
from app.errors import (
    CoastError,
    DimensionMismatchError,
    InvalidArgumentError,
    InvalidInputError,
    TooSmallError,
)
from app.services.pca import decompose

logger = logging.getLogger(__name__)
settings = get_settings()


# ──────────────────────────────────────────────
# Types
# ──────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class Contour:
    """Ordered (lon, lat) points in degrees. Closed contours do not repeat
    their first point."""

    points: np.ndarray = field(repr=False)
    closed: bool
    id: str
    class_tag: str = ""

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2:
            raise InvalidInputError(f"contour {self.id}: points must be an (n, 2) array")
        minimum = 3 if self.closed else 2
        if points.shape[0] < minimum:
            kind = "closed" if self.closed else "open"
            raise InvalidInputError(
                f"contour {self.id}: {kind} contours need at least {minimum} points, "
                f"got {points.shape[0]}"
            )
        if not np.all(np.isfinite(points)):
            raise InvalidInputError(f"contour {self.id}: non-finite coordinate")
        if np.any(np.abs(points[:, 1]) > 90.0):
            raise InvalidInputError(f"contour {self.id}: latitude outside [-90, 90]")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return self.points.shape[0]

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Segment start and end points, including the closing segment."""
        if self.closed:
            return self.points, np.roll(self.points, -1, axis=0)
        return self.points[:-1], self.points[1:]


@dataclass(frozen=True)
class PartitionLayout:
    """Stride-1 windows of ``partition_length`` points over one contour."""

    partition_length: int
    starts: np.ndarray
    wraparound: bool
    point_count: int

    @property
    def m(self) -> int:
        return self.starts.shape[0]

    def indices(self) -> np.ndarray:
        """(P, M) point indices; column j lists window j's points in order."""
        idx = self.starts[None, :] + np.arange(self.partition_length)[:, None]
        if self.wraparound:
            idx = idx % self.point_count
        return idx

    def coverage(self) -> np.ndarray:
        """Number of windows covering each point."""
        return np.bincount(self.indices().ravel(), minlength=self.point_count)


@dataclass
class ContourSetResult:
    """Outcome of simplifying a contour set."""

    contours: list[Contour]
    dropped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)
    variance: dict[str, float] = field(default_factory=dict)

    @property
    def mean_variance_fraction(self) -> Optional[float]:
        if not self.variance:
            return None
        return float(np.mean(list(self.variance.values())))


# ──────────────────────────────────────────────
# Operations
# ──────────────────────────────────────────────


def _check_parameters(p: int, k: Optional[int] = None) -> None:
    if p < 2:
        raise InvalidArgumentError(f"partition length must be >= 2, got {p}")
    if k is not None and not 1 <= k <= p:
        raise InvalidArgumentError(f"mode count must be in [1, {p}], got {k}")


def partition_contour(c: Contour, p: int) -> tuple[np.ndarray, np.ndarray, PartitionLayout]:
    """Split a contour into overlapping windows of p points (x and y separately)."""
    _check_parameters(p)
    n = len(c)
    if n < p:
        raise TooSmallError(
            f"contour {c.id} has {n} points, fewer than the partition length {p}",
            size=n,
            required=p,
        )
    count = n if c.closed else n - p + 1
    layout = PartitionLayout(
        partition_length=p,
        starts=np.arange(count),
        wraparound=c.closed,
        point_count=n,
    )
    idx = layout.indices()
    return c.points[idx, 0], c.points[idx, 1], layout


def assemble_contour(
    recon_x: np.ndarray, recon_y: np.ndarray, layout: PartitionLayout
) -> np.ndarray:
    """Average each point over the windows covering it.

    Contributions are summed in ascending window order.
    """
    expected = (layout.partition_length, layout.m)
    recon_x = np.asarray(recon_x, dtype=np.float64)
    recon_y = np.asarray(recon_y, dtype=np.float64)
    if recon_x.shape != expected or recon_y.shape != expected:
        raise DimensionMismatchError(
            f"reconstructions {recon_x.shape}/{recon_y.shape} do not match layout {expected}"
        )
    # window-major order: all of window 0, then window 1, ...
    idx = layout.indices().T.ravel()
    counts = np.bincount(idx, minlength=layout.point_count)
    sum_x = np.bincount(idx, weights=recon_x.T.ravel(), minlength=layout.point_count)
    sum_y = np.bincount(idx, weights=recon_y.T.ravel(), minlength=layout.point_count)
    return np.column_stack((sum_x / counts, sum_y / counts))


def _simplify(
    c: Contour, p: int, k: int, workers: Optional[int] = None
) -> tuple[Contour, float]:
    _check_parameters(p, k)
    x_windows, y_windows, layout = partition_contour(c, p)
    x = decompose(x_windows, workers=workers)
    y = decompose(y_windows, workers=workers)
    points = assemble_contour(x.reconstruct(k), y.reconstruct(k), layout)
    fraction = 0.5 * (x.variance_fraction(k) + y.variance_fraction(k))
    return replace(c, points=points), fraction


def simplify_contour(c: Contour, p: int, k: int, workers: Optional[int] = None) -> Contour:
    """Reconstruct a contour from its first k modes; same point count, flag and id."""
    simplified, _ = _simplify(c, p, k, workers=workers)
    return simplified


def simplify_contour_set(
    contours: list[Contour],
    p: int,
    k: int,
    keep_small: bool = False,
    workers: Optional[int] = None,
) -> ContourSetResult:
    """Simplify every contour with at least p points; drop the rest.

    With ``keep_small`` the undersized contours pass through unchanged.
    Failures are collected per contour and never abort the set.
    """
    _check_parameters(p, k)
    workers = workers or settings.workers
    result = ContourSetResult(contours=[])

    large = [c for c in contours if len(c) >= p]

    def run(c: Contour) -> tuple[Optional[Contour], float, Optional[str]]:
        try:
            simplified, fraction = _simplify(c, p, k, workers=1)
            return simplified, fraction, None
        except CoastError as e:
            return None, 0.0, e.reason

    if workers > 1 and len(large) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = iter(list(pool.map(run, large)))
    else:
        outcomes = iter([run(c) for c in large])

    for c in contours:
        if len(c) < p:
            if keep_small:
                result.contours.append(c)
            else:
                result.dropped.append(c.id)
            continue
        simplified, fraction, error = next(outcomes)
        if error is not None:
            result.failed[c.id] = error
            logger.warning(f"Contour {c.id} failed to simplify: {error}")
            continue
        result.contours.append(simplified)
        result.variance[c.id] = fraction

    if result.dropped:
        logger.info(
            f"Dropped {len(result.dropped)} contour(s) shorter than {p} points: "
            f"{', '.join(result.dropped[:10])}{' ...' if len(result.dropped) > 10 else ''}"
        )
    return result
