"""Command-line interface for rigtrack.

Commands:
- `synth` renders a preset or SceneSpec document into a sequence directory
- `perturb` writes a copy of a sequence with a noisy rig and noisy depth
- `rectify` fits a consistent rig and writes rectified.json
- `fuse` dumps the fused feature cloud of one frame (ORPC)
- `track` tracks the sequence queries and writes tracks.json / tracks.csv
- `eval-track`, `eval-depth`, `consistency` print metric reports
- `run` executes the load -> rectify -> track -> evaluate chain
- `ablate` runs the tracking or input ablation on a synthetic scene
- `check` runs an in-process smoke-check (tools.check_runtime)
- `version` prints the project version

This script is importable and also registered as a console script entry point
in pyproject.toml.
"""
from __future__ import annotations

import functools
from pathlib import Path
from typing import Any, Callable, Optional

import click
from loguru import logger

from config.settings import Settings
from core.errors import RigTrackError, UndefinedMetricError
from core.logging import add_file_logging, configure_debug_logging
from fusion.cloud import fuse_frame
from metrics.consistency import geometry_consistency
from metrics.depth import depth_eval_many
from metrics.tracking import evaluate_tracks
from pipeline.experiments import format_records, input_ablation, tracking_ablation
from pipeline.stages import PipelineContext, build_pipeline, rectify_sequence, track_sequence
from rectification.geometry import RectifiedGeometry
from storage.formats import write_cloud, write_depth
from storage.sequence import (
    LoadedSequence,
    depth_path,
    load_rectified,
    load_sequence,
    load_tracks,
    save_rectified,
    save_sequence,
    save_tracks,
    write_report,
    write_table,
)
from synthetic.generate import generate_scene
from synthetic.perturb import PerturbationSpec, perturb_calibration, perturb_depth
from synthetic.presets import preset, preset_names
from synthetic.scene import SceneSpec, load_scene_spec
from tools.check_runtime import main as check_main

VERSION = "rigtrack 0.1.1"

HINTS_HELP = "Comma-separated rectifier inputs from rgb,k,pose,depth"


def _reports_errors(fn: Callable[..., Any]) -> Callable[..., Any]:
    """Turn RigTrackError into a one-line message and exit status 1."""

    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except (RigTrackError, ValueError, KeyError) as e:
            click.echo(f"Error: {e}", err=True)
            raise SystemExit(1)

    return wrapper


def _settings(ctx: click.Context, **overrides: Any) -> Settings:
    obj = ctx.obj or {}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if obj.get("threads") is not None:
        overrides["threads"] = obj["threads"]
    if obj.get("config") is not None:
        settings = Settings.from_document(obj["config"], **overrides)
    else:
        settings = Settings(**overrides)
    if settings.log_file is not None:
        add_file_logging(settings.log_file)
    configure_debug_logging(obj.get("verbose", False) or settings.debug)
    return settings


def _geometry(
    seq: LoadedSequence, rectified: Optional[Path], hints: Optional[str], settings: Settings
) -> RectifiedGeometry:
    """Stored rectification if given, else rectify with `hints`, else the rig as loaded."""
    if rectified is not None:
        return load_rectified(rectified, seq.frames)
    return rectify_sequence(seq.frames, seq.rig, hints, settings)


def _scene(scene: str, width: Optional[int], height: Optional[int], frames: Optional[int]) -> SceneSpec:
    if Path(scene).is_file():
        return load_scene_spec(scene)
    kwargs = {k: v for k, v in {"width": width, "height": height, "frames": frames}.items() if v is not None}
    return preset(scene, **kwargs)


@click.group()
@click.option("--verbose", "-v", is_flag=True, default=False, help="Debug logging, including the optimizer trace")
@click.option("--threads", type=int, default=None, help="Worker threads (results do not depend on it)")
@click.option(
    "--config", type=click.Path(dir_okay=False, path_type=Path), default=None, help="JSON settings document"
)
@click.pass_context
def main(ctx: click.Context, verbose: bool, threads: Optional[int], config: Optional[Path]) -> None:
    """rigtrack: multi-view RGB-D rig rectification and metric 3D point tracking."""
    ctx.ensure_object(dict)
    ctx.obj.update(verbose=verbose, threads=threads, config=config)


@main.command()
@click.argument("scene")
@click.argument("out", type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--width", type=int, default=None, help="Override the preset image width")
@click.option("--height", type=int, default=None, help="Override the preset image height")
@click.option("--frames", type=int, default=None, help="Override the preset frame count")
@click.pass_context
@_reports_errors
def synth(
    ctx: click.Context, scene: str, out: Path, seed: int,
    width: Optional[int], height: Optional[int], frames: Optional[int],
) -> None:
    """Render SCENE (a preset name or a SceneSpec JSON file) into OUT."""
    settings = _settings(ctx, seed=seed)
    settings.validate_at_startup(out)
    spec = _scene(scene, width, height, frames)
    seq = generate_scene(spec, seed=seed, threads=settings.threads)
    save_sequence(out, seq.frames, seq.rig, seq.queries, seq.ground_truth, name=spec.name)
    if seq.never_visible:
        logger.warning(f"Anchors never visible, not queried: {', '.join(seq.never_visible)}")
    click.echo(f"Wrote {seq.num_frames} frames x {seq.num_views} views to {out}")


@main.command()
@click.argument("sequence", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out", type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--standard/--custom", default=True, show_default=True, help="Use the standard noise levels")
@click.option("--rotation-deg", type=float, default=0.0)
@click.option("--translation", type=float, default=0.0)
@click.option("--focal", type=float, default=0.0)
@click.option("--principal", type=float, default=0.0)
@click.option("--depth-scale", type=float, default=0.0)
@click.option("--depth-offset", type=float, default=0.0)
@click.pass_context
@_reports_errors
def perturb(
    ctx: click.Context, sequence: Path, out: Path, seed: int, standard: bool,
    rotation_deg: float, translation: float, focal: float, principal: float,
    depth_scale: float, depth_offset: float,
) -> None:
    """Copy SEQUENCE to OUT with a noisy rig and noisy depth."""
    settings = _settings(ctx, seed=seed)
    settings.validate_at_startup(out)
    if standard:
        p = PerturbationSpec.standard(seed=seed)
    else:
        p = PerturbationSpec(
            rotation_deg=rotation_deg, translation=translation, focal=focal, principal=principal,
            depth_scale=depth_scale, depth_offset=depth_offset, seed=seed,
        )
    seq = load_sequence(sequence)
    rig = perturb_calibration(seq.rig, p)
    frames, errors = perturb_depth(seq.frames, p)
    gt_depth = None
    if p.depth_scale > 0 or p.depth_offset > 0:
        gt_depth = [tuple(f.depth(v) for v in range(f.num_views)) for f in seq.gt_frames()]
    save_sequence(out, frames, rig, seq.queries, seq.ground_truth, gt_depth, name=seq.name)
    for v, (a, b) in enumerate(errors):
        logger.debug(f"view {v}: depth error a={a:.6f} b={b:.6f}")
    click.echo(f"Wrote perturbed sequence to {out}")


@main.command()
@click.argument("sequence", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--hints", default="rgb,k,pose,depth", show_default=True, help=HINTS_HELP)
@click.option("--seed", type=int, default=None, help="Sample selection seed")
@click.option("--trace", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write the optimization trace")
@click.option(
    "--write-depth", "depth_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
    help="Write rectified metric depth maps (ORGD) under this directory",
)
@click.pass_context
@_reports_errors
def rectify(
    ctx: click.Context, sequence: Path, out: Path, hints: str, seed: Optional[int],
    trace: Optional[Path], depth_dir: Optional[Path],
) -> None:
    """Rectify SEQUENCE and write the geometry document to OUT."""
    settings = _settings(ctx, seed=seed)
    settings.validate_at_startup(out.parent)
    seq = load_sequence(sequence)
    geom = rectify_sequence(seq.frames, seq.rig, hints, settings)
    consistency = geometry_consistency(
        geom, seq.frames[0], samples_per_pair=settings.rectifier.samples_per_pair, seed=settings.seed
    )
    save_rectified(out, geom, hints, consistency.mean)
    if trace is not None and geom.trace is not None:
        geom.trace.write(trace)
    if depth_dir is not None:
        for t in range(seq.num_frames):
            for v in range(seq.num_views):
                write_depth(depth_path(depth_dir, v, t), geom.metric_depth(t, v))
    click.echo(f"converged={geom.converged} scale={geom.scale:.6f} observable={geom.scale_observable}")
    click.echo(consistency.format())


@main.command()
@click.argument("sequence", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--rectified", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--hints", default=None, help=f"{HINTS_HELP}; without --rectified or --hints the rig is used as is")
@click.option("--frame", "t", type=int, default=0, show_default=True)
@click.pass_context
@_reports_errors
def fuse(
    ctx: click.Context, sequence: Path, out: Path, rectified: Optional[Path], hints: Optional[str], t: int
) -> None:
    """Dump the fused feature cloud of one frame of SEQUENCE to OUT (ORPC)."""
    settings = _settings(ctx)
    seq = load_sequence(sequence)
    if not 0 <= t < seq.num_frames:
        raise click.BadParameter(f"frame {t} outside 0..{seq.num_frames - 1}", param_hint="--frame")
    geom = _geometry(seq, rectified, hints, settings)
    f = settings.fusion
    cloud = fuse_frame(seq.frames[t], geom, f.stride, f.patch_size, f.leaf_size, settings.threads)
    write_cloud(out, cloud)
    click.echo(f"Wrote {len(cloud)} points to {out}")


@main.command()
@click.argument("sequence", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--rectified", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--hints", default=None, help=f"{HINTS_HELP}; without --rectified or --hints the rig is used as is")
@click.option(
    "--align-to-gt/--no-align-to-gt", default=True, show_default=True,
    help="Move queries into the rectified frame by rig alignment and trajectories back",
)
@click.pass_context
@_reports_errors
def track(
    ctx: click.Context, sequence: Path, out: Path, rectified: Optional[Path], hints: Optional[str],
    align_to_gt: bool,
) -> None:
    """Track the queries of SEQUENCE and write tracks to OUT."""
    settings = _settings(ctx)
    settings.validate_at_startup(out.parent)
    seq = load_sequence(sequence)
    geom = _geometry(seq, rectified, hints, settings)
    adjusted = rectified is not None or hints is not None
    reference = seq.rig if align_to_gt and adjusted else None
    tracks = track_sequence(seq.frames, geom, seq.queries, settings, reference)
    csv_path = save_tracks(out, tracks)
    for query_id, reason in tracks.errors.items():
        click.echo(f"query {query_id}: {reason}", err=True)
    click.echo(f"Wrote {len(tracks)} tracks to {out} and {csv_path}")


@main.command("eval-track")
@click.argument("predicted", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("ground_truth", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write a JSON report")
@click.pass_context
@_reports_errors
def eval_track(ctx: click.Context, predicted: Path, ground_truth: Path, out: Optional[Path]) -> None:
    """Score PREDICTED tracks against GROUND_TRUTH tracks (AJ, delta_avg, OA, MTE)."""
    settings = _settings(ctx)
    result = evaluate_tracks(
        load_tracks(predicted), load_tracks(ground_truth),
        settings.evaluation.thresholds, settings.tracker.visibility_threshold,
    )
    click.echo(result.format())
    if out is not None:
        write_report(out, result.as_dict())


@main.command("eval-depth")
@click.argument("sequence", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--rectified", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--hints", default=None, help=HINTS_HELP)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write a JSON report")
@click.pass_context
@_reports_errors
def eval_depth(
    ctx: click.Context, sequence: Path, rectified: Optional[Path], hints: Optional[str], out: Optional[Path]
) -> None:
    """AbsRel and RMSE of metric depth against the sequence's ground-truth depth."""
    settings = _settings(ctx)
    seq = load_sequence(sequence)
    geom = _geometry(seq, rectified, hints, settings)
    if not geom.scale_observable:
        raise UndefinedMetricError("metric scale is unobservable without a depth hint")
    preds = [geom.metric_depth(t, v) for t in range(seq.num_frames) for v in range(seq.num_views)]
    gts = [frame.depth(v) for frame in seq.gt_frames() for v in range(seq.num_views)]
    result = depth_eval_many(preds, gts)
    click.echo(result.format())
    if out is not None:
        write_report(out, result.as_dict())


@main.command()
@click.argument("sequence", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--rectified", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--hints", default=None, help=HINTS_HELP)
@click.option("--seed", type=int, default=None, help="Sample selection seed")
@click.option("--worst", type=click.IntRange(min=0), default=0, show_default=True, help="List the N largest residuals")
@click.pass_context
@_reports_errors
def consistency(
    ctx: click.Context,
    sequence: Path,
    rectified: Optional[Path],
    hints: Optional[str],
    seed: Optional[int],
    worst: int,
) -> None:
    """Mean cross-view 3D inconsistency of the first frame."""
    settings = _settings(ctx, seed=seed)
    seq = load_sequence(sequence)
    geom = _geometry(seq, rectified, hints, settings)
    result = geometry_consistency(
        geom, seq.frames[0], samples_per_pair=settings.rectifier.samples_per_pair, seed=settings.seed, worst=worst
    )
    click.echo(result.format())


@main.command()
@click.argument("sequence", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out", type=click.Path(file_okay=False, path_type=Path))
@click.option("--hints", default="rgb,k,pose,depth", show_default=True, help=HINTS_HELP)
@click.option("--no-rectify", is_flag=True, default=False, help="Track with the rig and depth as loaded")
@click.option("--fuse-dump", is_flag=True, default=False, help="Also fuse frame 0 for inspection")
@click.option("--seed", type=int, default=None)
@click.pass_context
@_reports_errors
def run(
    ctx: click.Context, sequence: Path, out: Path, hints: str, no_rectify: bool, fuse_dump: bool,
    seed: Optional[int],
) -> None:
    """Run load -> rectify -> track -> evaluate on SEQUENCE, writing results to OUT."""
    settings = _settings(ctx, seed=seed)
    settings.validate_at_startup(out)
    context = PipelineContext(
        settings=settings, sequence_dir=sequence, output_dir=out, hints=None if no_rectify else hints
    )
    chain = build_pipeline(include_fuse_dump=fuse_dump)
    results = chain.execute(context)
    for result in results:
        click.echo(repr(result))
    if not all(r.success for r in results):
        raise SystemExit(1)


@main.command()
@click.argument("kind", type=click.Choice(["tracking", "input"]))
@click.option("--scene", default="default", show_default=True, help=f"Preset ({', '.join(preset_names())}) or SceneSpec file")
@click.option("--width", type=int, default=None)
@click.option("--height", type=int, default=None)
@click.option("--frames", type=int, default=None)
@click.option("--hints", default="rgb,k,pose,depth", show_default=True, help=f"{HINTS_HELP} (tracking ablation)")
@click.option("--no-tracking", is_flag=True, default=False, help="Skip tracking metrics in the input ablation")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write the table as CSV")
@click.pass_context
@_reports_errors
def ablate(
    ctx: click.Context, kind: str, scene: str, width: Optional[int], height: Optional[int],
    frames: Optional[int], hints: str, no_tracking: bool, seed: int, out: Optional[Path],
) -> None:
    """Run the tracking ablation (ground truth / rectified / raw) or the input ablation."""
    settings = _settings(ctx, seed=seed)
    spec = _scene(scene, width, height, frames)
    perturbation = PerturbationSpec.standard(seed=seed)
    if kind == "tracking":
        records = tracking_ablation(spec, perturbation, hints, settings, seed=seed)
    else:
        records = input_ablation(spec, perturbation, settings, seed=seed, with_tracking=not no_tracking)
    click.echo(format_records(records))
    if out is not None:
        write_table(out, [r.as_row() for r in records])


@main.command()
def check() -> None:
    """Run in-process runtime smoke-check on a tiny synthetic scene."""
    raise SystemExit(check_main())


@main.command()
def version() -> None:
    """Print project version."""
    click.echo(VERSION)


if __name__ == "__main__":
    main()
