"""Tests for shoreline contour simplification."""

from __future__ import annotations

import numpy as np
import pytest

from app.errors import DimensionMismatchError, InvalidArgumentError, InvalidInputError, TooSmallError
from app.services import synthetic
from app.services.contours import (
    Contour,
    PartitionLayout,
    assemble_contour,
    partition_contour,
    simplify_contour,
    simplify_contour_set,
)


def _square() -> Contour:
    return Contour(points=[[0, 0], [1, 0], [1, 1], [0, 1]], closed=True, id="square")


def _radius(c: Contour, center=(0.0, 0.0)) -> np.ndarray:
    return np.hypot(c.points[:, 0] - center[0], c.points[:, 1] - center[1])


# ──────────────────────────────────────────────
# Contour type
# ──────────────────────────────────────────────


class TestContour:
    def test_closed_needs_three_points(self):
        with pytest.raises(InvalidInputError):
            Contour(points=[[0, 0], [1, 1]], closed=True, id="x")

    def test_open_needs_two_points(self):
        with pytest.raises(InvalidInputError):
            Contour(points=[[0, 0]], closed=False, id="x")

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError, match="non-finite"):
            Contour(points=[[0, 0], [np.nan, 1]], closed=False, id="x")

    def test_latitude_range(self):
        with pytest.raises(InvalidInputError, match="latitude"):
            Contour(points=[[0, 0], [0, 91]], closed=False, id="x")

    def test_points_are_read_only(self):
        c = _square()
        with pytest.raises(ValueError):
            c.points[0, 0] = 5.0

    def test_closed_segments_wrap(self):
        starts, ends = _square().segments()
        assert starts.shape == (4, 2)
        np.testing.assert_array_equal(ends[-1], [0, 0])


# ──────────────────────────────────────────────
# Partitioning
# ──────────────────────────────────────────────


class TestPartitionContour:
    def test_closed_square_wraps(self):
        x, _, layout = partition_contour(_square(), 2)
        assert layout.m == 4
        np.testing.assert_array_equal(layout.indices().T, [[0, 1], [1, 2], [2, 3], [3, 0]])
        np.testing.assert_array_equal(x[:, 3], [0.0, 0.0])

    def test_open_polyline_clamps(self):
        c = Contour(points=np.column_stack((np.arange(5.0), np.zeros(5))), closed=False, id="l")
        x, y, layout = partition_contour(c, 3)
        np.testing.assert_array_equal(layout.starts, [0, 1, 2])
        assert x.shape == (3, 3)
        np.testing.assert_array_equal(x[:, 2], [2.0, 3.0, 4.0])

    def test_closed_coverage_is_p(self):
        c = synthetic.circle(50)
        _, _, layout = partition_contour(c, 7)
        assert np.all(layout.coverage() == 7)

    def test_open_coverage(self):
        c = synthetic.random_contour(20, closed=False)
        _, _, layout = partition_contour(c, 6)
        n, p, m = 20, 6, 15
        expected = [min(i + 1, p, m, n - i) for i in range(n)]
        np.testing.assert_array_equal(layout.coverage(), expected)

    def test_too_small(self):
        islet = synthetic.circle(3, id="islet")
        with pytest.raises(TooSmallError) as exc:
            partition_contour(islet, 100)
        assert exc.value.size == 3
        assert exc.value.required == 100

    def test_partition_length_at_least_two(self):
        with pytest.raises(InvalidArgumentError):
            partition_contour(_square(), 1)


class TestAssembleContour:
    def test_two_value_mean(self):
        layout = PartitionLayout(
            partition_length=2, starts=np.array([0, 1]), wraparound=False, point_count=3
        )
        recon_x = np.array([[0.0, 3.0], [1.0, 9.0]])
        points = assemble_contour(recon_x, np.zeros((2, 2)), layout)
        np.testing.assert_array_equal(points[:, 0], [0.0, 2.0, 9.0])

    def test_agreeing_windows_restore_values(self):
        c = synthetic.random_contour(30, closed=True)
        x, y, layout = partition_contour(c, 5)
        np.testing.assert_allclose(assemble_contour(x, y, layout), c.points, rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        _, _, layout = partition_contour(_square(), 2)
        with pytest.raises(DimensionMismatchError):
            assemble_contour(np.zeros((2, 3)), np.zeros((2, 3)), layout)


# ──────────────────────────────────────────────
# Simplification
# ──────────────────────────────────────────────


class TestSimplifyContour:
    @pytest.mark.parametrize("p", [4, 16, 100])
    @pytest.mark.parametrize("closed", [True, False])
    def test_all_modes_reproduce_input(self, p, closed):
        c = synthetic.random_contour(240, closed=closed, seed=p)
        out = simplify_contour(c, p, p)
        assert np.max(np.abs(out.points - c.points)) <= 1e-9

    def test_preserves_count_flag_and_id(self):
        c = synthetic.random_contour(120, closed=False, id="coast")
        out = simplify_contour(c, 10, 2)
        assert len(out) == len(c)
        assert out.closed is False
        assert out.id == "coast"

    def test_translation_equivariance(self, rng):
        for seed in range(100):
            c = synthetic.random_contour(int(rng.integers(40, 200)), closed=bool(seed % 2), seed=seed)
            shift = rng.uniform(-20, 20, size=2)
            moved = Contour(points=c.points + shift, closed=c.closed, id=c.id)
            expected = simplify_contour(c, 16, 2).points + shift
            np.testing.assert_allclose(simplify_contour(moved, 16, 2).points, expected, rtol=0, atol=1e-9)

    def test_reflection_symmetry(self):
        c = synthetic.random_contour(90, closed=False, seed=5)
        mirrored = Contour(points=c.points * [1.0, -1.0], closed=False, id=c.id)
        out = simplify_contour(c, 12, 3)
        np.testing.assert_allclose(
            simplify_contour(mirrored, 12, 3).points, out.points * [1.0, -1.0], atol=1e-12
        )

    def test_first_mode_keeps_circle_radius(self):
        out = simplify_contour(synthetic.circle(256), 64, 1)
        assert out.closed
        assert abs(_radius(out).mean() - 1.0) < 0.2

    def test_first_mode_smooths_noise(self):
        noisy = synthetic.circle(256, noise=0.02, seed=1)
        out = simplify_contour(noisy, 64, 1)
        assert _radius(out).std() < _radius(noisy).std()

    def test_deterministic(self):
        c = synthetic.fjord_coast(400)
        np.testing.assert_array_equal(
            simplify_contour(c, 50, 3).points, simplify_contour(c, 50, 3).points
        )

    def test_modes_above_partition_rejected(self):
        with pytest.raises(InvalidArgumentError):
            simplify_contour(_square(), 2, 3)


class TestSimplifyContourSet:
    def test_islands_below_partition_dropped(self):
        contours = [
            synthetic.circle(n, center=(float(i), 58.0), radius=0.1, id=f"c{n}")
            for i, n in enumerate((40, 90, 150, 1000))
        ]
        result = simplify_contour_set(contours, 100, 1)
        assert [c.id for c in result.contours] == ["c150", "c1000"]
        assert result.dropped == ["c40", "c90"]
        assert result.failed == {}

    def test_mainland_kept_islet_dropped(self):
        mainland = synthetic.fjord_coast(1000)
        islet = synthetic.circle(40, center=(3.0, 59.0), radius=0.1, id="islet")
        result = simplify_contour_set([mainland, islet], 100, 1)
        assert [c.id for c in result.contours] == ["mainland"]

    def test_keep_small_passes_through(self):
        islet = synthetic.circle(40, id="islet")
        result = simplify_contour_set([islet], 100, 1, keep_small=True)
        assert result.contours[0] is islet
        assert result.dropped == []

    def test_partition_two_drops_nothing(self):
        contours = [synthetic.random_contour(2, closed=False, id="a"), _square()]
        result = simplify_contour_set(contours, 2, 1)
        assert len(result.contours) == 2

    def test_empty_input(self):
        result = simplify_contour_set([], 10, 1)
        assert result.contours == []
        assert result.mean_variance_fraction is None

    def test_order_preserved_and_workers_agree(self):
        contours = [synthetic.random_contour(80 + i, closed=i % 2 == 0, seed=i, id=f"r{i}") for i in range(6)]
        serial = simplify_contour_set(contours, 20, 2, workers=1)
        parallel = simplify_contour_set(contours, 20, 2, workers=4)
        assert [c.id for c in serial.contours] == [f"r{i}" for i in range(6)]
        for a, b in zip(serial.contours, parallel.contours):
            np.testing.assert_array_equal(a.points, b.points)

    def test_variance_fraction_reported(self):
        result = simplify_contour_set([synthetic.fjord_coast(300)], 30, 2)
        assert 0.0 < result.mean_variance_fraction <= 1.0

    def test_invalid_parameters(self):
        with pytest.raises(InvalidArgumentError):
            simplify_contour_set([], 10, 0)
