"""PCA kernel: centering, covariance, Jacobi eigensolver, modes, truncated reconstruction.

Matrices follow the snapshot convention: an N x M array whose column j is
observation j (one partition of N values). All arithmetic is float64.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from app.config import get_settings
from app.errors import (
    DimensionMismatchError,
    InvalidArgumentError,
    InvalidInputError,
    NumericalFailureError,
)

logger = logging.getLogger(__name__)
settings = get_settings()


# ──────────────────────────────────────────────
# Types
# ──────────────────────────────────────────────


@dataclass(frozen=True)
class SampleMatrix:
    """Fluctuation matrix S (N x M) and the per-column means removed from it."""

    data: np.ndarray
    means: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        means = np.asarray(self.means, dtype=np.float64).reshape(-1)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidInputError(f"sample matrix must be N x M with N, M >= 1, got {data.shape}")
        if means.shape[0] != data.shape[1]:
            raise DimensionMismatchError(
                f"{means.shape[0]} means for {data.shape[1]} columns"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "means", means)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class EigenSystem:
    """Descending eigenvalues and the matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0
    residual: float = 0.0

    def __post_init__(self) -> None:
        values = np.asarray(self.eigenvalues, dtype=np.float64).reshape(-1)
        vectors = np.asarray(self.eigenvectors, dtype=np.float64)
        if vectors.shape != (values.shape[0], values.shape[0]):
            raise DimensionMismatchError(
                f"eigenvectors {vectors.shape} do not match {values.shape[0]} eigenvalues"
            )
        object.__setattr__(self, "eigenvalues", values)
        object.__setattr__(self, "eigenvectors", vectors)

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


@dataclass(frozen=True)
class ModeSet:
    """PCA modes Phi (M x N); row j holds partition j's coefficients."""

    modes: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "modes", np.asarray(self.modes, dtype=np.float64))


# ──────────────────────────────────────────────
# Operations
# ──────────────────────────────────────────────


def center_columns(raw: np.ndarray) -> SampleMatrix:
    """Remove each column's arithmetic mean."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
        raise InvalidInputError(f"expected an N x M matrix with N, M >= 1, got shape {raw.shape}")
    bad = np.argwhere(~np.isfinite(raw))
    if bad.size:
        row, col = bad[0]
        raise InvalidInputError(f"non-finite entry at row {row}, column {col}")
    means = raw.mean(axis=0)
    return SampleMatrix(data=raw - means, means=means)


def covariance(s: SampleMatrix, workers: Optional[int] = None) -> np.ndarray:
    """C = (1/M) S S^T, symmetric to the last bit.

    Partial products are taken over fixed column chunks and summed in chunk
    order, so the result does not depend on ``workers``.
    """
    workers = workers or settings.workers
    chunk = max(1, settings.covariance_chunk)
    data = s.data
    bounds = [(lo, min(lo + chunk, s.m)) for lo in range(0, s.m, chunk)]

    def partial(bound: tuple[int, int]) -> np.ndarray:
        block = data[:, bound[0] : bound[1]]
        return block @ block.T

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(partial, bounds))
    else:
        parts = [partial(b) for b in bounds]

    total = parts[0].copy()
    for part in parts[1:]:
        total += part
    c = total / s.m
    return 0.5 * (c + c.T)


@lru_cache(maxsize=64)
def _rotation_rounds(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Round-robin schedule: each round is a set of disjoint (p, q) pairs, every
    pair appears once per sweep."""
    size = n + (n % 2)
    players = list(range(size))
    rounds = []
    for _ in range(size - 1):
        half = size // 2
        pairs = [
            (min(a, b), max(a, b))
            for a, b in zip(players[:half], reversed(players[half:]))
            if a < n and b < n
        ]
        p = np.array([a for a, _ in pairs], dtype=np.intp)
        q = np.array([b for _, b in pairs], dtype=np.intp)
        rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _off_diagonal_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def _rotate(a: np.ndarray, v: np.ndarray, p: np.ndarray, q: np.ndarray) -> None:
    """Apply one round of disjoint Jacobi rotations in place: A <- J^T A J, V <- V J."""
    app = a[p, p]
    aqq = a[q, q]
    apq = a[p, q]
    active = apq != 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        tau = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
        t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
    t = np.where(active & np.isfinite(t), t, 0.0)
    cos = 1.0 / np.sqrt(1.0 + t * t)
    sin = t * cos

    col_p = a[:, p]
    col_q = a[:, q]
    a[:, p] = col_p * cos - col_q * sin
    a[:, q] = col_p * sin + col_q * cos

    row_p = a[p, :]
    row_q = a[q, :]
    a[p, :] = cos[:, None] * row_p - sin[:, None] * row_q
    a[q, :] = sin[:, None] * row_p + cos[:, None] * row_q
    a[p, q] = 0.0
    a[q, p] = 0.0

    vec_p = v[:, p]
    vec_q = v[:, q]
    v[:, p] = vec_p * cos - vec_q * sin
    v[:, q] = vec_p * sin + vec_q * cos


def eigendecompose_symmetric(
    c: np.ndarray,
    tolerance: Optional[float] = None,
    max_sweeps: Optional[int] = None,
) -> EigenSystem:
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Converged when the off-diagonal Frobenius norm is at most
    ``tolerance * ||C||_F``. Eigenpairs are sorted by descending eigenvalue
    (stable, so ties keep solver order) and each eigenvector is signed so that
    its largest-magnitude entry is positive.
    """
    tolerance = settings.jacobi_tolerance if tolerance is None else tolerance
    max_sweeps = settings.jacobi_max_sweeps if max_sweeps is None else max_sweeps

    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
        raise InvalidInputError(f"expected a square matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise InvalidInputError("matrix has non-finite entries")

    n = c.shape[0]
    a = 0.5 * (c + c.T)
    v = np.eye(n)
    norm = float(np.linalg.norm(a))
    target = tolerance * norm
    rounds = _rotation_rounds(n)

    sweeps = 0
    residual = _off_diagonal_norm(a)
    while residual > target:
        if sweeps >= max_sweeps:
            raise NumericalFailureError(
                f"Jacobi eigensolver did not converge after {sweeps} sweeps "
                f"(off-diagonal norm {residual:.3e}, target {target:.3e})",
                residual=residual,
            )
        for p, q in rounds:
            _rotate(a, v, p, q)
        sweeps += 1
        residual = _off_diagonal_norm(a)

    logger.debug(f"Jacobi n={n} converged in {sweeps} sweeps (residual {residual:.3e})")

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    v = v[:, order]

    pivots = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivots, np.arange(n)])
    signs[signs == 0] = 1.0
    v = v * signs

    return EigenSystem(eigenvalues=values, eigenvectors=v, sweeps=sweeps, residual=residual)


def compute_modes(s: SampleMatrix, e: EigenSystem) -> ModeSet:
    """Phi = S^T A."""
    if e.n != s.n:
        raise DimensionMismatchError(
            f"eigensystem is {e.n} x {e.n} but partitions have length {s.n}"
        )
    return ModeSet(modes=s.data.T @ e.eigenvectors)


def reconstruct(s: SampleMatrix, e: EigenSystem, phi: ModeSet, k: int) -> np.ndarray:
    """A_k Phi_k^T with each column's mean added back."""
    if not 0 <= k <= s.n:
        raise InvalidArgumentError(f"mode count k={k} outside [0, {s.n}]")
    if e.n != s.n or phi.modes.shape != (s.m, s.n):
        raise DimensionMismatchError(
            f"modes {phi.modes.shape} / eigensystem {e.n} do not match samples {s.n} x {s.m}"
        )
    if k == 0:
        fluctuation = np.zeros((s.n, s.m))
    else:
        fluctuation = e.eigenvectors[:, :k] @ phi.modes[:, :k].T
    return fluctuation + s.means[None, :]


def variance_fraction(e: EigenSystem, k: int) -> float:
    """Share of total variance carried by the first k modes, in [0, 1]."""
    if not 0 <= k <= e.n:
        raise InvalidArgumentError(f"mode count k={k} outside [0, {e.n}]")
    values = np.clip(e.eigenvalues, 0.0, None)
    total = float(values.sum())
    if total <= 0.0:
        return 1.0
    return float(min(1.0, max(0.0, values[:k].sum() / total)))


# ──────────────────────────────────────────────
# One decomposition, many truncations
# ──────────────────────────────────────────────


@dataclass(frozen=True)
class Decomposition:
    """Everything needed to reconstruct the same data at several mode counts."""

    samples: SampleMatrix
    eigen: EigenSystem
    modes: ModeSet = field(repr=False)

    def reconstruct(self, k: int) -> np.ndarray:
        return reconstruct(self.samples, self.eigen, self.modes, k)

    def variance_fraction(self, k: int) -> float:
        return variance_fraction(self.eigen, k)


def decompose(raw: np.ndarray, workers: Optional[int] = None) -> Decomposition:
    """center -> covariance -> eigendecompose -> modes."""
    samples = center_columns(raw)
    eigen = eigendecompose_symmetric(covariance(samples, workers=workers))
    return Decomposition(samples=samples, eigen=eigen, modes=compute_modes(samples, eigen))
