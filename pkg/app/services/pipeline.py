"""End-to-end workflow: classify and simplify shorelines, close the domain,
simplify bathymetry and export the mesh-generator file."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from app.config import get_settings
from app.errors import InvalidArgumentError
from app.models import (
    BoundaryConfig,
    BoundaryReport,
    ClassReport,
    ClassSelector,
    GradationConfig,
    GradationRuleConfig,
    LoxodromeConfig,
    OpenBoundaryConfig,
    PipelineConfig,
    RasterConfig,
    RasterReport,
    RunReport,
    ShorelineConfig,
    SweepStep,
)
from app.services.boundary import (
    BoundaryLoop,
    GeoPoint,
    LoxodromeSpec,
    blend_loxodromes,
    preset_line,
    sample_loxodrome,
    trim_to_domain,
)
from app.services.contours import Contour, simplify_contour_set
from app.services.geo_io import (
    ContourDocument,
    read_contours,
    read_json,
    read_raster,
    write_contours,
    write_raster,
)
from app.services.raster import RasterGrid, fill_nodata, simplify_raster_report, simplify_raster_sweep
from app.services.size_field import PRESET_RULES, GradationRule, RuleBinding, evaluate_size, export_geo

logger = logging.getLogger(__name__)
settings = get_settings()

PathLike = Union[str, Path]


# ──────────────────────────────────────────────
# Configuration
# ──────────────────────────────────────────────


@dataclass
class RunContext:
    """A validated configuration plus the directories its paths resolve against."""

    config: PipelineConfig
    base_dir: Path
    workers: int = 1
    samples: Optional[int] = None
    max_edge_length: Optional[float] = None
    out_dir: Optional[Path] = None

    def input_path(self, name: str) -> Path:
        path = Path(name)
        return path if path.is_absolute() else self.base_dir / path

    def output_path(self, name: str) -> Path:
        path = Path(name)
        if path.is_absolute():
            return path
        return (self.out_dir or self.base_dir) / path

    @property
    def h_max(self) -> float:
        if self.max_edge_length is not None:
            return self.max_edge_length
        gradation = self.config.gradation
        if gradation is not None and gradation.max_edge_length is not None:
            return gradation.max_edge_length
        return settings.max_edge_length


def load_config(
    path: PathLike,
    workers: Optional[int] = None,
    out_dir: Optional[PathLike] = None,
    max_edge_length: Optional[float] = None,
    samples: Optional[int] = None,
) -> RunContext:
    """Validate a pipeline config file; explicit arguments override its values."""
    path = Path(path)
    config = PipelineConfig.model_validate(read_json(path))
    base_dir = path.resolve().parent
    if max_edge_length is not None and max_edge_length <= 0:
        raise InvalidArgumentError(f"max edge length must be positive, got {max_edge_length}")
    if samples is not None and samples < 2:
        raise InvalidArgumentError(f"samples must be >= 2, got {samples}")
    ctx = RunContext(
        config=config,
        base_dir=base_dir,
        workers=workers or config.workers or settings.workers,
        samples=samples,
        max_edge_length=max_edge_length,
    )
    chosen = out_dir if out_dir is not None else config.out_dir
    if chosen is not None:
        chosen = Path(chosen)
        ctx.out_dir = chosen if chosen.is_absolute() else (
            Path.cwd() / chosen if out_dir is not None else base_dir / chosen
        )
    return ctx


# ──────────────────────────────────────────────
# Shorelines
# ──────────────────────────────────────────────


def _selected(c: Contour, selector: ClassSelector) -> bool:
    if selector.class_tag is not None and c.class_tag != selector.class_tag:
        return False
    if selector.ids is not None and c.id not in selector.ids:
        return False
    if selector.bbox is not None:
        lon, lat = c.points.mean(axis=0)
        min_lon, min_lat, max_lon, max_lat = selector.bbox
        if not (min_lon <= lon <= max_lon and min_lat <= lat <= max_lat):
            return False
    return True


def classify(
    contours: list[Contour], config: ShorelineConfig
) -> tuple[dict[str, list[Contour]], list[str]]:
    """First matching class wins; contours no class selects are returned as unassigned ids."""
    groups: dict[str, list[Contour]] = {c.name: [] for c in config.classes}
    unassigned: list[str] = []
    for contour in contours:
        for cls in config.classes:
            if _selected(contour, cls.select):
                groups[cls.name].append(contour)
                break
        else:
            unassigned.append(contour.id)
    if unassigned:
        logger.warning(f"{len(unassigned)} contour(s) match no shoreline class and are omitted")
    return groups, unassigned


@dataclass
class ShorelineResult:
    document: ContourDocument
    reports: list[ClassReport] = field(default_factory=list)
    unassigned: list[str] = field(default_factory=list)

    def by_class(self) -> dict[str, list[Contour]]:
        out: dict[str, list[Contour]] = {}
        for c in self.document.contours:
            out.setdefault(c.class_tag, []).append(c)
        return out


def run_shorelines(ctx: RunContext) -> ShorelineResult:
    config = ctx.config.shorelines
    doc = read_contours(ctx.input_path(config.input))
    groups, unassigned = classify(doc.contours, config)

    result = ShorelineResult(document=ContourDocument(), unassigned=unassigned)
    output: list[Contour] = []
    for cls in config.classes:
        members = groups[cls.name]
        report = ClassReport(
            name=cls.name, partition=cls.partition, modes=cls.modes, input=len(members)
        )
        if cls.full_resolution:
            kept = members
        else:
            outcome = simplify_contour_set(
                members, cls.partition, cls.modes, keep_small=cls.keep_small, workers=ctx.workers
            )
            kept = outcome.contours
            report.dropped = outcome.dropped
            report.failed = outcome.failed
            report.variance_fraction = outcome.mean_variance_fraction
        output.extend(replace(c, class_tag=cls.name) for c in kept)
        report.kept = len(kept)
        result.reports.append(report)
        logger.info(
            f"Class {cls.name}: {report.kept}/{report.input} kept, "
            f"{len(report.dropped)} dropped, {len(report.failed)} failed"
        )
    result.document = ContourDocument(contours=output)
    return result


# ──────────────────────────────────────────────
# Boundary
# ──────────────────────────────────────────────


def loxodrome_spec(cfg: LoxodromeConfig, samples: Optional[int] = None) -> LoxodromeSpec:
    return LoxodromeSpec(
        start=GeoPoint(*cfg.start),
        bearing=cfg.bearing,
        stop_lat=cfg.stop_lat,
        stop_lon=cfg.stop_lon,
        samples=samples or settings.loxodrome_samples,
    )


def build_open_line(cfg: OpenBoundaryConfig, samples: Optional[int] = None) -> np.ndarray:
    samples = samples or cfg.samples or settings.loxodrome_samples
    if cfg.preset is not None:
        return preset_line(cfg.preset, samples=samples)
    if cfg.loxodrome is not None:
        return sample_loxodrome(loxodrome_spec(cfg.loxodrome, samples))
    a, b = (sample_loxodrome(loxodrome_spec(s, samples)) for s in cfg.blend)
    return blend_loxodromes(a, b)


def build_boundary(
    shorelines: list[Contour], config: BoundaryConfig, samples: Optional[int] = None
) -> tuple[list[BoundaryLoop], BoundaryReport]:
    names = [ob.name for ob in config.open_boundaries]
    lines = [build_open_line(ob, samples) for ob in config.open_boundaries]
    seed = GeoPoint(*config.seed) if config.seed is not None else None
    loops = trim_to_domain(shorelines, lines, seed=seed, names=names)
    report = BoundaryReport(
        open_lines=names,
        loops=sum(1 for loop in loops if loop.role == "outer"),
        islands=sum(1 for loop in loops if loop.role == "island"),
        segments=sum(len(loop.segments) for loop in loops),
    )
    return loops, report


def loops_to_document(loops: list[BoundaryLoop]) -> ContourDocument:
    return ContourDocument(
        contours=[
            Contour(points=loop.vertices(), closed=True, id=f"loop-{i}", class_tag=loop.role)
            for i, loop in enumerate(loops)
        ]
    )


# ──────────────────────────────────────────────
# Size field
# ──────────────────────────────────────────────


def _first(*values: Optional[float]) -> float:
    return next(v for v in values if v is not None)


def gradation_rule(r: GradationRuleConfig, h_max: float) -> GradationRule:
    """Values given on the rule win over its preset's; the run's edge length fills a missing h_max."""
    base: Optional[GradationRule] = None
    if r.preset is not None:
        if r.preset not in PRESET_RULES:
            raise InvalidArgumentError(
                f"rule for class {r.class_id}: unknown preset '{r.preset}' "
                f"(known: {', '.join(PRESET_RULES)})"
            )
        base = PRESET_RULES[r.preset]
    return GradationRule(
        class_id=r.class_id,
        h_min=_first(r.h_min, base.h_min if base else None),
        plateau=_first(r.plateau, base.plateau if base else None, 0.0),
        ramp=_first(r.ramp, base.ramp if base else None, 1.0),
        h_max=_first(r.h_max, base.h_max if base else None, h_max),
    )


def gradation_rules(rules: list[GradationRuleConfig], h_max: float) -> list[GradationRule]:
    return [gradation_rule(r, h_max) for r in rules]


def rule_bindings(
    rules: list[GradationRule], by_class: dict[str, list[Contour]]
) -> list[RuleBinding]:
    return [(rule, by_class.get(rule.class_id, [])) for rule in rules]


def probe_size(ctx: RunContext, shorelines: ShorelineResult, lon: float, lat: float) -> float:
    gradation = ctx.config.gradation or GradationConfig()
    rules = gradation_rules(gradation.rules, ctx.h_max)
    return evaluate_size(GeoPoint(lon, lat), rule_bindings(rules, shorelines.by_class()))


def export_domain(ctx: RunContext, loops: list[BoundaryLoop], path: PathLike) -> str:
    gradation = ctx.config.gradation or GradationConfig()
    return export_geo(
        loops,
        gradation_rules(gradation.rules, ctx.h_max),
        path=path,
        h_max=ctx.h_max,
        curve_type=gradation.curve_type,
    )


# ──────────────────────────────────────────────
# Raster
# ──────────────────────────────────────────────


def _prefilled(grid: RasterGrid, fill: bool) -> tuple[RasterGrid, int]:
    if not fill:
        return grid, 0
    return fill_nodata(grid), int(grid.nodata_mask.sum())


def simplify_grid(
    grid: RasterGrid, block: tuple[int, int], modes: int, fill: bool, workers: Optional[int] = None
) -> tuple[RasterGrid, RasterReport]:
    grid, filled_cells = _prefilled(grid, fill)
    p, q = block
    outcome = simplify_raster_report(grid, p, q, modes, workers=workers)
    report = RasterReport(
        nrows=grid.nrows,
        ncols=grid.ncols,
        block=(p, q),
        modes=modes,
        variance_fraction=outcome.variance_fraction,
        rms_change=outcome.rms_change,
        filled_cells=filled_cells,
    )
    return outcome.grid, report


def sweep_grid(
    grid: RasterGrid,
    block: tuple[int, int],
    modes: list[int],
    fill: bool,
    workers: Optional[int] = None,
) -> tuple[dict[int, RasterGrid], RasterReport]:
    """One decomposition, one grid per mode count. The report's headline
    figures are those of the largest count; ``sweep`` lists every count."""
    grid, filled_cells = _prefilled(grid, fill)
    p, q = block
    results = simplify_raster_sweep(grid, p, q, modes, workers=workers)
    last = results[max(results)]
    report = RasterReport(
        nrows=grid.nrows,
        ncols=grid.ncols,
        block=(p, q),
        modes=last.modes,
        variance_fraction=last.variance_fraction,
        rms_change=last.rms_change,
        filled_cells=filled_cells,
        sweep=[
            SweepStep(modes=k, variance_fraction=r.variance_fraction, rms_change=r.rms_change)
            for k, r in results.items()
        ],
    )
    for step in report.sweep:
        logger.info(
            f"Sweep k={step.modes}: variance {step.variance_fraction:.4f}, rms change {step.rms_change:.6g}"
        )
    return {k: r.grid for k, r in results.items()}, report


def sweep_path(path: PathLike, modes: int) -> Path:
    """``out/depth.asc`` becomes ``out/depth_k16.asc``."""
    path = Path(path)
    return path.with_name(f"{path.stem}_k{modes}{path.suffix}")


def write_sweep(grids: dict[int, RasterGrid], report: RasterReport, base: PathLike) -> dict[str, str]:
    outputs: dict[str, str] = {}
    for step in report.sweep:
        path = write_raster(grids[step.modes], sweep_path(base, step.modes))
        step.output = str(path)
        outputs[f"raster_k{step.modes}"] = str(path)
    return outputs


def run_raster(
    ctx: RunContext, config: RasterConfig
) -> tuple[Union[RasterGrid, dict[int, RasterGrid]], RasterReport]:
    grid = read_raster(ctx.input_path(config.input))
    if config.sweep is not None:
        return sweep_grid(grid, config.block, config.sweep, config.fill_nodata, ctx.workers)
    return simplify_grid(grid, config.block, config.modes, config.fill_nodata, ctx.workers)


# ──────────────────────────────────────────────
# Whole pipeline
# ──────────────────────────────────────────────


def new_report(command: str) -> RunReport:
    return RunReport(tool=settings.app_name, version=settings.app_version, command=command)


def run_pipeline(ctx: RunContext) -> RunReport:
    """Every configured stage, writing each output as soon as it is complete."""
    start = time.perf_counter()
    config = ctx.config
    report = new_report("pipeline")

    shorelines = run_shorelines(ctx)
    report.classes = shorelines.reports
    report.unassigned = shorelines.unassigned
    if config.shorelines.output:
        path = write_contours(shorelines.document, ctx.output_path(config.shorelines.output))
        report.outputs["shorelines"] = str(path)

    loops: Optional[list[BoundaryLoop]] = None
    if config.boundary is not None:
        loops, report.boundary = build_boundary(
            shorelines.document.contours, config.boundary, ctx.samples
        )
        if config.boundary.output:
            path = write_contours(loops_to_document(loops), ctx.output_path(config.boundary.output))
            report.outputs["boundary"] = str(path)

    if config.gradation is not None and config.gradation.geo_output:
        if loops is None:
            raise InvalidArgumentError("the mesh-generator export needs a boundary section")
        path = ctx.output_path(config.gradation.geo_output)
        export_domain(ctx, loops, path)
        report.outputs["geo"] = str(path)

    if config.raster is not None:
        result, report.raster = run_raster(ctx, config.raster)
        if config.raster.output and isinstance(result, dict):
            base = ctx.output_path(config.raster.output)
            report.outputs.update(write_sweep(result, report.raster, base))
        elif config.raster.output:
            path = write_raster(result, ctx.output_path(config.raster.output))
            report.outputs["raster"] = str(path)

    report.elapsed_seconds = round(time.perf_counter() - start, 3)
    logger.info(f"Pipeline finished in {report.elapsed_seconds}s; outputs: {', '.join(report.outputs)}")
    return report


def report_dict(report: RunReport) -> dict[str, Any]:
    return report.model_dump(mode="json")
