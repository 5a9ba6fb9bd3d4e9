"""
shapetrack command line.

    build-manifold  train a PCA shape manifold from car shapes
    gen             generate a synthetic track with ground truth
    fit             fit shape and trajectory to a track (or a directory of tracks)
    eval            score a fit against ground truth
    export-shape    write surface points of a shape code as PLY

Exit codes: 0 success, 1 runtime failure or non-converged fit, 2 usage/input error.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from src.config.settings import PipelineConfig, load_config
from src.core.errors import ComputationError, InputError, ManifoldError, ScenarioError
from src.evaluation.reports import write_csv, write_dat, write_json
from src.evaluation.scores import distance_curve, evaluate_fit, full_surface_points
from src.geometry.point_io import read_points, write_points
from src.geometry.sdf_grid import GridSpec, SdfGrid, build_sdf_from_points, read_sdf
from src.ingest.track_io import load_track
from src.models.records import ScenarioSpec
from src.optimizer.solver import FitResult, solve
from src.services.batch_processor import TrackBatchProcessor, discover_tracks
from src.shape.car_generator import training_grids
from src.shape.manifold import ShapeManifold, train
from src.synth.generator import GroundTruth, generate, write_scene
from src.synth.presets import get_preset
from src.utils.observability.logging_utils import log_event
from src.utils.observability.tracing import IterationTracer

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text}")


def _config(args, **overrides) -> PipelineConfig:
    overrides["seed"] = getattr(args, "seed", None)
    return load_config(args.config, overrides)


def _grid_spec(text: Optional[str], config: PipelineConfig) -> GridSpec:
    if not text:
        return GridSpec.from_settings(config.grid)
    parts = text.split(",")
    if len(parts) != 5:
        raise InputError(f"--grid expects nx,ny,nz,voxel,trunc, got {text}")
    try:
        nx, ny, nz = (int(p) for p in parts[:3])
        voxel, trunc = float(parts[3]), float(parts[4])
    except ValueError as e:
        raise InputError(f"--grid: {e}") from e
    return GridSpec.centered((nx, ny, nz), voxel, trunc, config.grid.center)


def _shape_grids(source: str, spec: GridSpec, config: PipelineConfig) -> List[SdfGrid]:
    if source.startswith("synthetic:"):
        try:
            count = int(source.split(":", 1)[1])
        except ValueError:
            raise InputError(f"--shapes synthetic:N expects an integer, got {source}")
        return training_grids(count, spec, seed=config.seed, n_rays=config.manifold.car_rays)

    path = Path(source)
    files = sorted(p for p in path.iterdir() if p.is_file()) if path.is_dir() else [
        Path(p) for p in source.split(",") if p
    ]
    grids = []
    for f in files:
        if f.suffix == ".sdf":
            grids.append(read_sdf(f))
        elif f.suffix in (".xyz", ".ply", ".txt"):
            points, normals = read_points(f)
            grids.append(build_sdf_from_points(points, spec, normals=normals))
    return grids


def default_manifold(config: PipelineConfig) -> ShapeManifold:
    spec = GridSpec.from_settings(config.grid)
    grids = training_grids(config.manifold.training_cars, spec, seed=config.seed, n_rays=config.manifold.car_rays)
    return train(grids, config.manifold.dimension)


def cmd_build_manifold(args) -> int:
    config = _config(args, **{"manifold.dimension": args.dim})
    spec = _grid_spec(args.grid, config)
    grids = _shape_grids(args.shapes, spec, config)
    if len(grids) < 2:
        raise ManifoldError(f"need at least 2 shapes, found {len(grids)} in {args.shapes}")
    manifold = train(grids, config.manifold.dimension)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    manifold.save(args.out)

    print(f"Trained manifold from {len(grids)} shapes -> {args.out}")
    for r, ratio in enumerate(manifold.explained_variance_ratio(), start=1):
        print(f"  R={r}: {ratio * 100:.2f}% variance explained")
    return EXIT_OK


def _scenario(args) -> ScenarioSpec:
    if args.preset:
        spec = get_preset(args.preset)
    else:
        path = Path(args.spec)
        if not path.exists():
            raise ScenarioError(f"scenario file not found: {path}")
        try:
            spec = ScenarioSpec.model_validate_json(path.read_text())
        except ValueError as e:
            raise ScenarioError(f"{path}: invalid scenario: {e}") from e
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    return spec


def cmd_gen(args) -> int:
    config = _config(args)
    spec = _scenario(args)
    manifold = ShapeManifold.load(args.manifold) if args.manifold else default_manifold(config)
    scene = generate(spec, manifold, config.render, config.ground)
    write_scene(scene, args.out)
    print(f"Generated {spec.name}: {scene.track.length} frames -> {args.out}")
    return EXIT_OK


def _trajectory_table(result: FitResult) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {"index": i, "t_s": ts, "x": p.t[0], "y": p.t[1], "z": p.t[2], "theta": p.theta, "v": p.v, "omega": p.omega}
            for i, ts, p in zip(result.frame_indices, result.timestamps, result.poses)
        ]
    )


def _fit_directory(args, config: PipelineConfig) -> int:
    tracks = discover_tracks(args.track)
    if not tracks:
        raise InputError(f"no track files under {args.track}")
    processor = TrackBatchProcessor(
        args.manifold, args.out, config, report_dir=Path(args.report).parent if args.report else None
    )
    summary = processor.run(tracks)
    for row in summary.results:
        status = "error: " + row["error"] if row["error"] else ("converged" if row["converged"] else "not converged")
        print(f"  {row['track']}: {status}")
    stats = summary.stats.get("_global", {})
    print(
        f"Fitted {len(tracks)} tracks in {summary.elapsed_seconds:.1f}s "
        f"({stats.get('converged_rate', 0.0):.0f}% converged)"
    )
    return EXIT_OK if summary.all_converged else EXIT_RUNTIME


def cmd_fit(args) -> int:
    config = _config(
        args,
        **{
            "energy.em_passes": args.em_passes,
            "lm.max_iterations": args.max_iters,
            "workers": args.workers,
        },
    )
    manifold = ShapeManifold.load(args.manifold)
    if Path(args.track).is_dir():
        return _fit_directory(args, config)

    track = load_track(args.track, config.ground, seed=config.seed)
    tracer = IterationTracer(args.report, track.id) if args.report else None
    result = solve(track, manifold, config, tracer=tracer)
    result.save(args.out)

    if args.surface_dir:
        for index, pose in zip(result.frame_indices, result.poses):
            points = full_surface_points(manifold, result.z, pose, seed=config.seed, render=config.render)
            write_points(Path(args.surface_dir) / f"frame_{index:04d}.ply", points)
    if args.trajectory:
        _trajectory_table(result).to_csv(args.trajectory, index=False)

    print(
        f"{track.id}: energy {result.energy.total:.6g} after {result.iterations} iterations, "
        f"regime {result.regime.value}, converged={result.converged}"
    )
    return EXIT_OK if result.converged else EXIT_RUNTIME


def cmd_eval(args) -> int:
    config = _config(args)
    taus = args.tau or config.evaluation.taus
    fit = FitResult.load(args.fit)
    truth = GroundTruth.load(args.gt)
    manifold = ShapeManifold.load(args.manifold)
    evaluation = evaluate_fit(fit, truth, manifold, taus, config.evaluation.distance_window, config.render)

    table = write_csv([evaluation], args.out)
    if args.json:
        write_json([evaluation], args.json)
    if args.dat:
        curve = distance_curve(evaluation.pose, config.evaluation.distance_window, config.evaluation.distance_step)
        write_dat(curve, args.dat, title=f"pose error vs distance, {fit.track_id}")

    with pd.option_context("display.width", 160, "display.max_columns", 20):
        print(table[["track_id", "tau", "completeness", "accuracy", "f1"]].to_string(index=False))
        print(evaluation.pose.bins.to_string(index=False))
    return EXIT_OK


def cmd_export_shape(args) -> int:
    config = _config(args)
    manifold = ShapeManifold.load(args.manifold)
    if args.fit:
        z = FitResult.load(args.fit).z
    elif args.code:
        z = np.array(args.code)
    else:
        z = np.zeros(manifold.dimension)
    z = manifold.check_code(z)
    points = full_surface_points(manifold, z, n_rays=args.rays, seed=config.seed, render=config.render)
    write_points(args.out, points)
    print(f"Wrote {len(points)} surface points -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration overlay file")
    common.add_argument("--seed", type=int, default=None, help="seed for every stochastic step")

    parser = argparse.ArgumentParser(description="Joint vehicle shape and trajectory estimation")
    subparsers = parser.add_subparsers(dest="command", help="Command to execute")

    build = subparsers.add_parser("build-manifold", parents=[common], help="Train a shape manifold")
    build.add_argument("--shapes", required=True, help="directory, comma list of files, or synthetic:N")
    build.add_argument("--out", required=True, help="output SMAN file")
    build.add_argument("--dim", type=_positive_int, default=None, help="manifold dimension R")
    build.add_argument("--grid", default=None, help="nx,ny,nz,voxel,trunc")
    build.set_defaults(handler=cmd_build_manifold)

    gen = subparsers.add_parser("gen", parents=[common], help="Generate a synthetic track")
    source = gen.add_mutually_exclusive_group(required=True)
    source.add_argument("--preset", help="named scenario")
    source.add_argument("--spec", help="scenario JSON file")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--manifold", default=None, help="SMAN file (default: train the synthetic car manifold)")
    gen.set_defaults(handler=cmd_gen)

    fit = subparsers.add_parser("fit", parents=[common], help="Fit shape and trajectory")
    fit.add_argument("--track", required=True, help="track JSON or a directory of tracks")
    fit.add_argument("--manifold", required=True, help="SMAN file")
    fit.add_argument("--out", required=True, help="FitResult JSON (a directory when --track is one)")
    fit.add_argument("--em-passes", type=int, default=None)
    fit.add_argument("--max-iters", type=_positive_int, default=None)
    fit.add_argument("--workers", type=_positive_int, default=None)
    fit.add_argument("--report", default=None, help="per-iteration JSONL energy log")
    fit.add_argument("--surface-dir", default=None, help="write posed surface points per frame (PLY)")
    fit.add_argument("--trajectory", default=None, help="write the fitted trajectory as CSV")
    fit.set_defaults(handler=cmd_fit)

    ev = subparsers.add_parser("eval", parents=[common], help="Score a fit against ground truth")
    ev.add_argument("--fit", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--manifold", required=True)
    ev.add_argument("--tau", type=_float_list, default=None, help="threshold list, e.g. 0.2,0.3")
    ev.add_argument("--out", required=True, help="CSV, one row per tau")
    ev.add_argument("--json", default=None)
    ev.add_argument("--dat", default=None, help="gnuplot data of the distance curve")
    ev.set_defaults(handler=cmd_eval)

    export = subparsers.add_parser("export-shape", parents=[common], help="Export a shape as PLY")
    export.add_argument("--manifold", required=True)
    export.add_argument("--out", required=True)
    code = export.add_mutually_exclusive_group()
    code.add_argument("--code", type=_float_list, default=None)
    code.add_argument("--fit", default=None)
    export.add_argument("--rays", type=_positive_int, default=20000)
    export.set_defaults(handler=cmd_export_shape)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "handler", None):
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.handler(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ComputationError as e:
        log_event("CLI", "computation failed", level="error", command=args.command, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
