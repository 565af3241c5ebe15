"""Tests for the distance-graded size field and the geometry file export."""

from __future__ import annotations

import numpy as np
import pytest

from app.errors import GeoParseError, InvalidArgumentError, InvalidInputError, UnclosableDomainError
from app.services import synthetic
from app.services.boundary import OPEN, SHORELINE, BoundaryLoop, BoundarySegment, GeoPoint, trim_to_domain
from app.services.contours import Contour
from app.services.size_field import (
    PRESET_RULES,
    GradationRule,
    central_angle,
    evaluate_size,
    evaluate_sizes,
    export_geo,
    loop_vertices,
    read_geo,
    shoreline_distance,
)


def _rule(**overrides) -> GradationRule:
    params = dict(class_id="coast", h_min=0.01, plateau=0.02, ramp=1.0, h_max=1.5)
    params.update(overrides)
    return GradationRule(**params)


def _meridian_coast() -> Contour:
    """Shoreline along the equator-crossing meridian 0E, 10S to 10N."""
    return Contour(points=[[0.0, -10.0], [0.0, 10.0]], closed=False, id="m", class_tag="coast")


def _square_loop() -> BoundaryLoop:
    shore = BoundarySegment(
        points=np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]), kind=SHORELINE, source="c", class_tag="coast"
    )
    sea = BoundarySegment(points=np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]), kind=OPEN, source="o", class_tag=OPEN)
    return BoundaryLoop(segments=[shore, sea])


# ──────────────────────────────────────────────
# Rules
# ──────────────────────────────────────────────


class TestGradationRule:
    def test_plateau_holds_minimum(self):
        rule = _rule()
        assert rule.size_at(0.0) == pytest.approx(0.01, abs=1e-12)
        assert rule.size_at(0.02) == pytest.approx(0.01, abs=1e-12)

    def test_linear_ramp(self):
        assert _rule().size_at(0.52) == pytest.approx(0.755, abs=1e-12)

    def test_far_field_is_maximum(self):
        rule = _rule()
        assert rule.size_at(1.02) == pytest.approx(1.5, abs=1e-12)
        assert rule.size_at(40.0) == pytest.approx(1.5)

    def test_vectorised(self):
        sizes = _rule().size_at(np.array([0.0, 0.52, 5.0]))
        np.testing.assert_allclose(sizes, [0.01, 0.755, 1.5], atol=1e-12)

    def test_h_min_above_h_max_rejected(self):
        with pytest.raises(InvalidArgumentError):
            _rule(h_min=2.0)

    def test_negative_plateau_rejected(self):
        with pytest.raises(InvalidArgumentError):
            _rule(plateau=-0.1)

    def test_zero_ramp_rejected(self):
        with pytest.raises(InvalidArgumentError):
            _rule(ramp=0.0)

    def test_presets(self):
        assert set(PRESET_RULES) == {"p500k1", "p100k1", "p100k5", "full"}
        assert PRESET_RULES["p100k1"].h_min == 0.01
        assert PRESET_RULES["full"].plateau == 0.05
        assert all(rule.h_max == 1.5 and rule.ramp == 1.0 for rule in PRESET_RULES.values())


# ──────────────────────────────────────────────
# Distances & evaluation
# ──────────────────────────────────────────────


class TestDistance:
    def test_central_angle_along_equator(self):
        assert central_angle(0.0, 0.0, 3.0, 0.0) == pytest.approx(3.0)

    def test_central_angle_along_meridian(self):
        assert central_angle(10.0, 50.0, 10.0, 52.5) == pytest.approx(2.5)

    def test_distance_to_segment_interior(self):
        starts, ends = _meridian_coast().segments()
        d = shoreline_distance(np.array([[0.52, 0.0]]), starts, ends)
        assert d[0] == pytest.approx(0.52, abs=1e-9)

    def test_distance_to_endpoint(self):
        starts, ends = _meridian_coast().segments()
        d = shoreline_distance(np.array([[0.0, 12.0]]), starts, ends)
        assert d[0] == pytest.approx(2.0, abs=1e-9)

    def test_across_antimeridian(self):
        coast = Contour(points=[[179.9, -1.0], [179.9, 1.0]], closed=False, id="dl")
        starts, ends = coast.segments()
        d = shoreline_distance(np.array([[-179.9, 0.0]]), starts, ends)
        assert d[0] == pytest.approx(0.2, abs=1e-9)


class TestEvaluateSize:
    def test_examples(self):
        rules = [(_rule(), [_meridian_coast()])]
        assert evaluate_size(GeoPoint(0.0, 0.0), rules) == pytest.approx(0.01, abs=1e-12)
        assert evaluate_size(GeoPoint(0.52, 0.0), rules) == pytest.approx(0.755, abs=1e-9)
        assert evaluate_size(GeoPoint(3.0, 0.0), rules) == pytest.approx(1.5)

    def test_minimum_over_rules(self):
        near = Contour(points=[[2.0, -1.0], [2.0, 1.0]], closed=False, id="n", class_tag="fine")
        rules = [
            (_rule(), [_meridian_coast()]),
            (_rule(class_id="fine", h_min=0.001, plateau=0.0), [near]),
        ]
        assert evaluate_size((2.0, 0.0), rules) == pytest.approx(0.001, abs=1e-12)
        assert evaluate_size((0.0, 0.0), rules) == pytest.approx(0.01, abs=1e-12)

    def test_never_below_smallest_minimum(self):
        coast = synthetic.fjord_coast(300)
        rules = [(PRESET_RULES[name], [coast]) for name in ("p100k1", "full")]
        sizes = evaluate_sizes(np.column_stack((np.linspace(0, 10, 50), np.full(50, 60.5))), rules)
        assert np.all(sizes >= 0.0005)
        assert np.all(sizes <= 1.5 + 1e-12)

    def test_batch_matches_single_and_workers(self):
        coast = synthetic.fjord_coast(200)
        rules = [(PRESET_RULES["p100k5"], [coast])]
        points = np.column_stack((np.linspace(0, 10, 600), np.linspace(58, 62, 600)))
        serial = evaluate_sizes(points, rules, workers=1)
        parallel = evaluate_sizes(points, rules, workers=3, chunk=64)
        np.testing.assert_allclose(serial, parallel, rtol=1e-12)
        assert serial[17] == pytest.approx(evaluate_size(points[17], rules), rel=1e-12)

    def test_no_rules(self):
        with pytest.raises(InvalidArgumentError):
            evaluate_size(GeoPoint(0.0, 0.0), [])

    def test_rule_without_contours(self):
        with pytest.raises(InvalidArgumentError, match="no shoreline"):
            evaluate_size(GeoPoint(0.0, 0.0), [(_rule(), [])])

    def test_non_finite_query(self):
        with pytest.raises(InvalidInputError):
            evaluate_sizes(np.array([[np.nan, 0.0]]), [(_rule(), [_meridian_coast()])])


# ──────────────────────────────────────────────
# Geometry file
# ──────────────────────────────────────────────


class TestExportGeo:
    def test_golden_square(self):
        text = export_geo([_square_loop()], [_rule()])
        lines = text.splitlines()
        assert lines[0].startswith("//")
        assert lines[1:] == [
            "Point(1) = {0, 0, 0, 1.5};",
            "Point(2) = {1, 0, 0, 1.5};",
            "Point(3) = {1, 1, 0, 1.5};",
            "Line(1) = {1, 2};",
            "Line(2) = {2, 3};",
            "Point(4) = {0, 1, 0, 1.5};",
            "Line(3) = {3, 4};",
            "Line(4) = {4, 1};",
            "Line Loop(1) = {1, 2, 3, 4};",
            "Plane Surface(1) = {1};",
            'Physical Line("coast") = {1, 2};',
            'Physical Line("open") = {3, 4};',
            'Physical Surface("domain") = {1};',
            "Field[1] = Distance;",
            "Field[1].CurvesList = {1, 2};",
            "Field[1].Sampling = 100;",
            "Field[2] = Threshold;",
            "Field[2].InField = 1;",
            "Field[2].SizeMin = 0.01;",
            "Field[2].SizeMax = 1.5;",
            "Field[2].DistMin = 0.02;",
            "Field[2].DistMax = 1.02;",
            "Field[3] = Min;",
            "Field[3].FieldsList = {2};",
            "Background Field = 3;",
            "Mesh.MeshSizeExtendFromBoundary = 0;",
            "Mesh.MeshSizeFromPoints = 0;",
            "Mesh.MeshSizeFromCurvature = 0;",
        ]

    def test_preset_rules_export_verbatim(self):
        corners = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 2.0), (0.0, 0.0)]
        tags = ["p500k1", "p100k1", "p100k5", "full", OPEN]
        segments = [
            BoundarySegment(
                points=np.array([corners[i], corners[i + 1]]),
                kind=OPEN if tag == OPEN else SHORELINE,
                source=tag,
                class_tag=tag,
            )
            for i, tag in enumerate(tags)
        ]
        text = export_geo([BoundaryLoop(segments=segments)], list(PRESET_RULES.values()))
        model = read_geo(text)
        thresholds = [
            (f["SizeMin"], f["SizeMax"], f["DistMin"], f["DistMax"])
            for _, f in sorted(model.fields.items())
            if f["type"] == "Threshold"
        ]
        assert thresholds == [
            (0.1, 1.5, 0.0, 1.0),
            (0.01, 1.5, 0.02, 1.02),
            (0.005, 1.5, 0.02, 1.02),
            (0.0005, 1.5, 0.05, 1.05),
        ]
        for line in ("Field[2].SizeMin = 0.1;", "Field[6].SizeMin = 0.005;", "Field[8].SizeMin = 0.0005;",
                     "Field[8].DistMin = 0.05;", "Field[8].DistMax = 1.05;"):
            assert line in text.splitlines()
        assert model.fields[9] == {"type": "Min", "FieldsList": [2.0, 4.0, 6.0, 8.0]}
        assert model.background_field == 9

    def test_unmatched_rule_leaves_field_count_short(self, caplog):
        with caplog.at_level("WARNING", logger="app.services.size_field"):
            model = read_geo(export_geo([_square_loop()], [_rule(), _rule(class_id="reef")]))
        assert [f["type"] for f in model.fields.values()] == ["Distance", "Threshold", "Min"]
        assert "reef matches no boundary curve" in caplog.text

    def test_zero_rules_use_constant_field(self):
        model = read_geo(export_geo([_square_loop()], []))
        assert model.fields == {1: {"type": "MathEval", "F": "1.5"}}
        assert model.background_field == 1

    def test_unmatched_rule_skipped(self):
        model = read_geo(export_geo([_square_loop()], [_rule(class_id="elsewhere")]))
        assert [f["type"] for f in model.fields.values()] == ["MathEval"]

    def test_spline_curves(self):
        model = read_geo(export_geo([_square_loop()], [_rule()], curve_type="spline"))
        assert [kind for kind, _ in model.curves.values()] == ["Spline", "Spline"]
        np.testing.assert_array_equal(loop_vertices(model)[0], [[0, 0], [1, 0], [1, 1], [0, 1]])

    def test_writes_file(self, tmp_path):
        path = tmp_path / "out" / "domain.geo"
        text = export_geo([_square_loop()], [_rule()], path=path)
        assert path.read_text(encoding="utf-8") == text

    def test_refuses_open_gap(self):
        loop = _square_loop()
        moved = BoundarySegment(points=np.array([[1.0, 1.5], [0.0, 1.0], [0.0, 0.0]]), kind=OPEN, source="o")
        loop.segments[1] = moved
        with pytest.raises(UnclosableDomainError):
            export_geo([loop], [])

    def test_no_loops(self):
        with pytest.raises(InvalidArgumentError):
            export_geo([], [])

    def test_bad_curve_type(self):
        with pytest.raises(InvalidArgumentError):
            export_geo([_square_loop()], [], curve_type="bezier")

    def test_domain_with_island_round_trips(self):
        lines = [
            np.array([[0.0, -1.0], [0.0, 5.0]]),
            np.array([[-1.0, 4.0], [5.0, 4.0]]),
            np.array([[4.0, 5.0], [4.0, -1.0]]),
            np.array([[5.0, 0.0], [-1.0, 0.0]]),
        ]
        island = synthetic.circle(24, center=(2.0, 2.0), radius=0.5, id="rock", class_tag="island")
        loops = trim_to_domain([island], lines)
        rule = _rule(class_id="island", h_min=0.02)
        model = read_geo(export_geo(loops, [rule]))
        assert model.surfaces == {1: [1, 2]}
        assert len(model.physical_curves["island"]) == 24
        assert model.fields[2]["SizeMin"] == 0.02
        parsed = loop_vertices(model)
        assert parsed[1].shape == (24, 2)

    def test_demo_domain_exports(self, demo_shorelines, demo_open_lines, demo_seed, tmp_path):
        loops = trim_to_domain(
            demo_shorelines, list(demo_open_lines.values()), seed=demo_seed, names=list(demo_open_lines)
        )
        rules = [_rule(class_id="mainland", h_min=0.05), _rule(class_id="island", h_min=0.02)]
        text = export_geo(loops, rules, path=tmp_path / "demo.geo")
        model = read_geo(tmp_path / "demo.geo")
        assert set(model.physical_curves) == {"mainland", "open", "island"}
        assert len(model.line_loops) == len(loops)
        assert "Background Field" in text


class TestReadGeo:
    def test_unknown_statement(self):
        with pytest.raises(GeoParseError) as exc:
            read_geo("Point(1) = {0, 0, 0, 1};\nExtrude {0, 0, 1} { Surface{1}; };\n")
        assert exc.value.offset is not None

    def test_missing_terminator(self):
        with pytest.raises(GeoParseError):
            read_geo("Point(1) = {0, 0, 0, 1};\nPoint(2) = {1, 0, 0, 1}")

    def test_undefined_curve_in_loop(self):
        model = read_geo("Point(1) = {0, 0, 0, 1};\nLine Loop(1) = {7};\n")
        with pytest.raises(GeoParseError):
            loop_vertices(model)

    def test_comments_ignored(self):
        model = read_geo("// header; with a semicolon\nPoint(1) = {2, 3, 0, 1};\n")
        assert model.points == {1: (2.0, 3.0, 0.0, 1.0)}
