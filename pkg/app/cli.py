"""Command-line surface.

Every command prints one JSON run report on stdout; diagnostics go to
stderr. Exit codes: 0 success, 2 validation error, 3 numerical failure,
1 anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from typing import Callable, Optional, Sequence

from pydantic import ValidationError

from app.config import configure_logging, get_settings
from app.errors import CoastError, InvalidArgumentError
from app.models import ClassReport, ErrorDetail, RunReport, parse_block
from app.services import pipeline
from app.services.contours import simplify_contour_set
from app.services.geo_io import (
    ContourDocument,
    read_contours,
    read_raster,
    write_contours,
    write_raster,
)

logger = logging.getLogger("coastpca.cli")
settings = get_settings()

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2


# ──────────────────────────────────────────────
# Commands
# ──────────────────────────────────────────────


def _probe(value: str) -> tuple[float, float]:
    parts = value.split(",")
    if len(parts) != 2:
        raise InvalidArgumentError(f"--probe needs lon,lat, got {value!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise InvalidArgumentError(f"--probe needs two numbers, got {value!r}")


def _mode_list(value: str) -> list[int]:
    """``16`` or a sweep such as ``1,16,32,48,64``."""
    try:
        modes = [int(part) for part in value.split(",")]
    except ValueError:
        raise InvalidArgumentError(f"--modes needs integers separated by commas, got {value!r}")
    return sorted(set(modes))


def _context(args: argparse.Namespace) -> pipeline.RunContext:
    return pipeline.load_config(
        args.config,
        workers=getattr(args, "workers", None),
        out_dir=getattr(args, "out_dir", None),
        max_edge_length=getattr(args, "max_edge_length", None),
        samples=getattr(args, "samples", None),
    )


def cmd_simplify_vector(args: argparse.Namespace, report: RunReport) -> None:
    doc = read_contours(args.input)
    outcome = simplify_contour_set(
        doc.contours, args.partition, args.modes, keep_small=args.keep_small, workers=args.workers
    )
    report.classes = [
        ClassReport(
            name="all",
            partition=args.partition,
            modes=args.modes,
            input=len(doc),
            kept=len(outcome.contours),
            dropped=outcome.dropped,
            failed=outcome.failed,
            variance_fraction=outcome.mean_variance_fraction,
        )
    ]
    path = write_contours(ContourDocument(contours=outcome.contours), args.output)
    report.outputs["shorelines"] = str(path)


def cmd_simplify_raster(args: argparse.Namespace, report: RunReport) -> None:
    try:
        block = parse_block(args.block)
    except ValueError as e:
        raise InvalidArgumentError(str(e))
    modes = _mode_list(args.modes)
    grid = read_raster(args.input)
    if len(modes) > 1:
        grids, report.raster = pipeline.sweep_grid(
            grid, block, modes, args.fill_nodata, workers=args.workers
        )
        report.outputs.update(pipeline.write_sweep(grids, report.raster, args.output))
        return
    simplified, report.raster = pipeline.simplify_grid(
        grid, block, modes[0], args.fill_nodata, workers=args.workers
    )
    report.outputs["raster"] = str(write_raster(simplified, args.output))


def _boundary_loops(ctx: pipeline.RunContext, report: RunReport):
    if ctx.config.boundary is None:
        raise InvalidArgumentError("config has no boundary section")
    shorelines = pipeline.run_shorelines(ctx)
    report.classes = shorelines.reports
    report.unassigned = shorelines.unassigned
    loops, report.boundary = pipeline.build_boundary(
        shorelines.document.contours, ctx.config.boundary, ctx.samples
    )
    return loops


def cmd_boundary(args: argparse.Namespace, report: RunReport) -> None:
    ctx = _context(args)
    loops = _boundary_loops(ctx, report)
    path = write_contours(pipeline.loops_to_document(loops), args.output)
    report.outputs["boundary"] = str(path)


def cmd_sizefield(args: argparse.Namespace, report: RunReport) -> None:
    lon, lat = _probe(args.probe)
    ctx = _context(args)
    shorelines = pipeline.run_shorelines(ctx)
    report.classes = shorelines.reports
    report.unassigned = shorelines.unassigned
    report.size = pipeline.probe_size(ctx, shorelines, lon, lat)


def cmd_export_geo(args: argparse.Namespace, report: RunReport) -> None:
    ctx = _context(args)
    loops = _boundary_loops(ctx, report)
    pipeline.export_domain(ctx, loops, args.output)
    report.outputs["geo"] = str(args.output)


def cmd_pipeline(args: argparse.Namespace, report: RunReport) -> RunReport:
    return pipeline.run_pipeline(_context(args))


COMMANDS: dict[str, Callable] = {
    "simplify-vector": cmd_simplify_vector,
    "simplify-raster": cmd_simplify_raster,
    "boundary": cmd_boundary,
    "sizefield": cmd_sizefield,
    "export-geo": cmd_export_geo,
    "pipeline": cmd_pipeline,
}


# ──────────────────────────────────────────────
# Parser
# ──────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coastpca",
        description="PCA shoreline and bathymetry simplification, domain boundaries and mesh size fields.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL (debug, info, ...)")
    sub = parser.add_subparsers(dest="command", required=True)

    def workers(p: argparse.ArgumentParser) -> None:
        p.add_argument("--workers", type=int, default=None, help="Worker threads")

    p = sub.add_parser("simplify-vector", help="Simplify a GeoJSON contour set")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--partition", type=int, required=True, help="Points per partition (p)")
    p.add_argument("--modes", type=int, required=True, help="Modes kept (k)")
    p.add_argument("--keep-small", action="store_true", help="Keep contours shorter than p")
    workers(p)

    p = sub.add_parser("simplify-raster", help="Simplify an ESRI ASCII grid")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--block", required=True, help="Block size PxQ")
    p.add_argument(
        "--modes", required=True, help="Modes kept (k), or a comma list writing one grid per k"
    )
    p.add_argument("--fill-nodata", action="store_true", help="Nearest-neighbour fill before PCA")
    workers(p)

    for name, help_text in (
        ("boundary", "Sample, blend and trim open boundaries"),
        ("export-geo", "Write the mesh-generator geometry file"),
        ("pipeline", "Run every configured stage"),
        ("sizefield", "Evaluate the size field at one point"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        workers(p)
        p.add_argument("--samples", type=int, default=None, help="Points per loxodrome")
        if name in ("boundary", "export-geo"):
            p.add_argument("--out", dest="output", required=True)
        if name in ("export-geo", "pipeline", "sizefield"):
            p.add_argument("--max-edge-length", type=float, default=None)
        if name == "pipeline":
            p.add_argument("--out-dir", default=None)
        if name == "sizefield":
            p.add_argument("--probe", required=True, help="lon,lat")
    return parser


def _emit(report: RunReport) -> None:
    sys.stdout.write(json.dumps(report.model_dump(mode="json"), sort_keys=True) + "\n")
    sys.stdout.flush()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    report = pipeline.new_report(args.command)
    start = time.perf_counter()
    code = EXIT_OK
    try:
        result = COMMANDS[args.command](args, report)
        if isinstance(result, RunReport):
            report = result
    except CoastError as e:
        logger.error(f"{args.command} failed: {e.reason}")
        report.status = "error"
        report.error = ErrorDetail(code=e.code, message=e.reason)
        code = e.exit_code
    except ValidationError as e:
        logger.error(f"{args.command}: invalid configuration: {e}")
        report.status = "error"
        report.error = ErrorDetail(
            code="VALIDATION_ERROR", message="invalid configuration", details=str(e)
        )
        code = EXIT_VALIDATION
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly")
        report.status = "error"
        report.error = ErrorDetail(code="INTERNAL_ERROR", message=str(e))
        code = EXIT_INTERNAL

    if not report.elapsed_seconds:
        report.elapsed_seconds = round(time.perf_counter() - start, 3)
    _emit(report)
    return code


if __name__ == "__main__":
    sys.exit(main())
