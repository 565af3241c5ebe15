"""Tests for configuration loading and shoreline classification."""

from __future__ import annotations

import json

import pytest
from pydantic import ValidationError

from app.errors import InvalidArgumentError
from app.models import GradationRuleConfig, OpenBoundaryConfig, PipelineConfig, ShorelineConfig, parse_block
from app.services.boundary import trim_to_domain
from app.services.pipeline import (
    build_open_line,
    classify,
    gradation_rules,
    load_config,
    loops_to_document,
    run_pipeline,
)


def _shoreline_config(*classes: dict) -> ShorelineConfig:
    return ShorelineConfig.model_validate({"input": "coast.geojson", "classes": list(classes)})


class TestClassify:
    def test_first_matching_class_wins(self, demo_shorelines):
        config = _shoreline_config(
            {"name": "small", "select": {"ids": ["islet"]}},
            {"name": "islands", "select": {"class": "island"}},
            {"name": "rest"},
        )
        groups, unassigned = classify(demo_shorelines, config)
        assert [c.id for c in groups["small"]] == ["islet"]
        assert [c.id for c in groups["islands"]] == ["orkney"]
        assert [c.id for c in groups["rest"]] == ["mainland"]
        assert unassigned == []

    def test_bbox_uses_centroid(self, demo_shorelines):
        config = _shoreline_config({"name": "north", "select": {"bbox": [-5.0, 56.0, 0.0, 58.0]}})
        groups, unassigned = classify(demo_shorelines, config)
        assert [c.id for c in groups["north"]] == ["orkney"]
        assert unassigned == ["mainland", "islet"]


class TestModels:
    def test_block_forms(self):
        assert parse_block("8x4") == (8, 4)
        assert parse_block("6") == (6, 6)
        assert parse_block([2, 3]) == (2, 3)
        with pytest.raises(ValueError):
            parse_block("axb")

    def test_open_boundary_needs_exactly_one_source(self):
        with pytest.raises(ValidationError):
            OpenBoundaryConfig(name="x")
        with pytest.raises(ValidationError):
            OpenBoundaryConfig(name="x", preset="north", loxodrome={"start": [0, 0], "bearing": 0, "stop_lat": 1})

    def test_loxodrome_needs_one_stop(self):
        with pytest.raises(ValidationError):
            OpenBoundaryConfig(loxodrome={"start": [0, 0], "bearing": 0, "stop_lat": 1, "stop_lon": 2})

    def test_rule_must_name_a_class(self, demo_config):
        demo_config["gradation"]["rules"][0]["class"] = "reef"
        with pytest.raises(ValidationError, match="reef"):
            PipelineConfig.model_validate(demo_config)

    def test_raster_modes_bounded_by_block(self, demo_config):
        demo_config["raster"]["modes"] = 17
        with pytest.raises(ValidationError):
            PipelineConfig.model_validate(demo_config)

    def test_raster_sweep_bounded_by_block(self, demo_config):
        del demo_config["raster"]["modes"]
        demo_config["raster"]["sweep"] = [1, 17]
        with pytest.raises(ValidationError, match="17"):
            PipelineConfig.model_validate(demo_config)

    def test_raster_needs_modes_or_sweep(self, demo_config):
        demo_config["raster"]["sweep"] = [1, 2]
        with pytest.raises(ValidationError, match="exactly one"):
            PipelineConfig.model_validate(demo_config)
        del demo_config["raster"]["sweep"]
        del demo_config["raster"]["modes"]
        with pytest.raises(ValidationError, match="exactly one"):
            PipelineConfig.model_validate(demo_config)

    def test_rule_needs_min_size_or_preset(self):
        with pytest.raises(ValidationError, match="h_min or a preset"):
            GradationRuleConfig(**{"class": "a", "plateau": 0.1})
        assert GradationRuleConfig(**{"class": "a", "preset": "full"}).h_min is None


class TestLoadConfig:
    def test_paths_resolve_against_config_dir(self, demo_workspace):
        ctx = load_config(demo_workspace / "config.json")
        assert ctx.input_path("coast.geojson") == demo_workspace.resolve() / "coast.geojson"
        assert ctx.output_path("out/a.geo") == demo_workspace.resolve() / "out" / "a.geo"
        assert ctx.h_max == 1.5

    def test_overrides(self, demo_workspace):
        ctx = load_config(demo_workspace / "config.json", workers=3, max_edge_length=0.75, samples=50)
        assert ctx.workers == 3
        assert ctx.h_max == 0.75
        assert ctx.samples == 50

    def test_config_edge_length(self, demo_workspace, demo_config):
        demo_config["gradation"]["max_edge_length"] = 2.0
        path = demo_workspace / "edge.json"
        path.write_text(json.dumps(demo_config), encoding="utf-8")
        assert load_config(path).h_max == 2.0

    def test_bad_overrides(self, demo_workspace):
        with pytest.raises(InvalidArgumentError):
            load_config(demo_workspace / "config.json", max_edge_length=0.0)
        with pytest.raises(InvalidArgumentError):
            load_config(demo_workspace / "config.json", samples=1)


class TestStages:
    def test_open_line_sources(self):
        preset = build_open_line(OpenBoundaryConfig(name="n", preset="skagerrak"), samples=30)
        assert preset.shape == (30, 2)
        single = build_open_line(
            OpenBoundaryConfig(loxodrome={"start": [0, 50], "bearing": 0, "stop_lat": 51}, samples=12)
        )
        assert single.shape == (12, 2)

    def test_rule_defaults_to_run_edge_length(self):
        rules = gradation_rules(
            [GradationRuleConfig(**{"class": "a", "h_min": 0.1}), GradationRuleConfig(**{"class": "b", "h_min": 0.1, "h_max": 3.0})],
            h_max=0.8,
        )
        assert [r.h_max for r in rules] == [0.8, 3.0]

    def test_rule_from_preset(self):
        (rule,) = gradation_rules([GradationRuleConfig(**{"class": "coast", "preset": "p100k5"})], h_max=0.8)
        assert (rule.class_id, rule.h_min, rule.plateau, rule.ramp, rule.h_max) == ("coast", 0.005, 0.02, 1.0, 1.5)

    def test_rule_values_override_preset(self):
        (rule,) = gradation_rules(
            [GradationRuleConfig(**{"class": "coast", "preset": "full", "h_min": 0.01, "h_max": 2.0})],
            h_max=0.8,
        )
        assert (rule.h_min, rule.plateau, rule.ramp, rule.h_max) == (0.01, 0.05, 1.0, 2.0)

    def test_rule_without_preset_gets_default_shape(self):
        (rule,) = gradation_rules([GradationRuleConfig(**{"class": "coast", "h_min": 0.1})], h_max=0.8)
        assert (rule.plateau, rule.ramp) == (0.0, 1.0)

    def test_unknown_preset(self):
        with pytest.raises(InvalidArgumentError, match="unknown preset 'p1k1'.*p500k1"):
            gradation_rules([GradationRuleConfig(**{"class": "coast", "preset": "p1k1"})], h_max=0.8)

    def test_loops_document(self, demo_shorelines, demo_open_lines, demo_seed):
        loops = trim_to_domain(
            demo_shorelines, list(demo_open_lines.values()), seed=demo_seed, names=list(demo_open_lines)
        )
        doc = loops_to_document(loops)
        assert [c.id for c in doc.contours] == [f"loop-{i}" for i in range(len(loops))]
        assert all(c.closed for c in doc.contours)

    def test_geo_export_needs_boundary(self, demo_workspace, demo_config):
        del demo_config["boundary"]
        path = demo_workspace / "noboundary.json"
        path.write_text(json.dumps(demo_config), encoding="utf-8")
        with pytest.raises(InvalidArgumentError, match="boundary"):
            run_pipeline(load_config(path))

    def test_raster_only_run(self, demo_workspace, demo_config):
        del demo_config["boundary"]
        del demo_config["gradation"]
        path = demo_workspace / "raster.json"
        path.write_text(json.dumps(demo_config), encoding="utf-8")
        report = run_pipeline(load_config(path))
        assert set(report.outputs) == {"shorelines", "raster"}
        assert report.boundary is None
        assert report.raster.block == (4, 4)

    def test_raster_sweep_run(self, demo_workspace, demo_config):
        del demo_config["boundary"]
        del demo_config["gradation"]
        del demo_config["raster"]["modes"]
        demo_config["raster"]["sweep"] = [4, 1, 16]
        path = demo_workspace / "sweep.json"
        path.write_text(json.dumps(demo_config), encoding="utf-8")
        report = run_pipeline(load_config(path))
        assert set(report.outputs) == {"shorelines", "raster_k1", "raster_k4", "raster_k16"}
        assert [s.modes for s in report.raster.sweep] == [1, 4, 16]
        assert report.raster.modes == 16
        assert report.raster.sweep[-1].rms_change < 1e-8
        assert report.raster.sweep[0].rms_change > report.raster.sweep[-1].rms_change
        for step in report.raster.sweep:
            expected = demo_workspace.resolve() / "out" / f"bathymetry_k{step.modes}.asc"
            assert step.output == report.outputs[f"raster_k{step.modes}"] == str(expected)
            assert expected.exists()
        assert not (demo_workspace / "out" / "bathymetry.asc").exists()

    def test_preset_rule_in_config(self, demo_workspace, demo_config):
        demo_config["gradation"]["rules"][0] = {"class": "mainland", "preset": "p500k1"}
        path = demo_workspace / "preset.json"
        path.write_text(json.dumps(demo_config), encoding="utf-8")
        report = run_pipeline(load_config(path))
        text = (demo_workspace / "out" / "domain.geo").read_text(encoding="utf-8")
        assert report.outputs["geo"]
        assert "SizeMin = 0.1;" in text
