"""Command-line front end: scan, plan, calibrate and match subcommands.

Exit codes: 0 on success, 2 for input or configuration problems, 3 for
an internal invariant violation.  Malformed input never produces a
traceback.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .cloud import accuracy_report, export_ply, merge
from .config import ConfigError, RunConfig, build_config, load_config, manifest_lines, parse_config
from .geometry import depth_resolution_mm, horizontal_fov_deg
from .mechanics import (
    Axis,
    Direction,
    PwmCommand,
    RigState,
    calibrate_scale,
    pulses_for_rotation,
    pwm_timing,
)
from .pgm import image_to_pgm_bytes, read_pgm, write_pgm
from .planner import format_shot_log, rotation_schedule, run_scan
from .scene import RangeReading, RigPose, load_scene
from .vision import (
    back_project,
    compensation_shift,
    depth_map_from_disparity,
    match_correlation,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _seed_override() -> int | None:
    raw = os.environ.get("STEREORIG_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"STEREORIG_SEED must be an integer, got {raw!r}") from None


def _auto_match_radius(scene, shots, config: RunConfig, visible: np.ndarray) -> float:
    """3x the depth resolution at the median visible distance and mean baseline."""
    targets = scene.xyz[visible] if visible.any() else scene.xyz
    median_distance = float(np.median(np.linalg.norm(targets, axis=1)))
    mean_baseline = float(np.mean([s.baseline_mm for s in shots])) if shots else 100.0
    return 3.0 * depth_resolution_mm(median_distance, mean_baseline, config.intrinsics)


def cmd_scan(config: RunConfig, values: dict, out_dir: Path) -> int:
    if config.scene_path is None:
        raise ConfigError("scan requires a 'scene' entry in the config")
    scene = load_scene(config.scene_path.read_text(encoding="utf-8"))
    out_dir.mkdir(parents=True, exist_ok=True)

    start = min(
        max(config.initial_baseline_mm, config.policy.baseline_min_mm),
        config.policy.baseline_max_mm,
    )
    rig = RigState(
        baseline_mm=start,
        baseline_min_mm=config.policy.baseline_min_mm,
        baseline_max_mm=config.policy.baseline_max_mm,
    )
    pairs, shots = run_scan(
        scene,
        config.policy,
        config.calibration,
        config.intrinsics,
        initial_state=rig,
        blob_radius_px=config.blob_radius_px,
        cone_half_angle_deg=config.cone_half_angle_deg,
        with_error=config.with_error,
    )

    fragments = []
    visible = np.zeros(len(scene), dtype=bool)
    for i, (pair, shot) in enumerate(zip(pairs, shots)):
        (out_dir / f"shot_{i}_L.pgm").write_bytes(image_to_pgm_bytes(pair.left))
        (out_dir / f"shot_{i}_R.pgm").write_bytes(image_to_pgm_bytes(pair.right))
        shift = compensation_shift(
            RangeReading(shot.range_mm, config.cone_half_angle_deg),
            pair.baseline_mm,
            config.intrinsics,
        )
        disp = match_correlation(
            pair.left,
            pair.right,
            shift_px=0 if shift is None else shift,
            window_px=config.vision.window_px,
            search_range_px=config.vision.search_range_px,
            min_score=config.vision.min_score,
            min_texture=config.vision.min_texture,
            subpixel=config.vision.subpixel,
        )
        depth = depth_map_from_disparity(
            disp, pair.baseline_mm, config.intrinsics, heading_deg=pair.heading_deg, heading_index=i
        )
        fragments.append(back_project(depth, RigPose(pair.heading_deg), intensities=pair.left))
        visible |= pair.visible_mask

    cloud = merge(fragments, voxel_mm=config.voxel_mm if config.voxel_mm > 0 else None)
    radius = config.match_radius_mm or _auto_match_radius(scene, shots, config, visible)
    report = accuracy_report(cloud, scene, radius, visible_mask=visible)

    (out_dir / "shots.log").write_text(format_shot_log(shots), encoding="utf-8")
    (out_dir / "cloud.ply").write_bytes(export_ply(cloud))
    (out_dir / "report.txt").write_text(
        f"recall {_fmt(report.recall)}\n"
        f"rmse_mm {_fmt(report.rmse_mm)}\n"
        f"median_error_mm {_fmt(report.median_error_mm)}\n"
        f"match_radius_mm {_fmt(report.match_radius_mm)}\n"
        f"cloud_points {len(cloud)}\n"
        f"scene_points {len(scene)}\n"
        f"visible_points {int(visible.sum())}\n"
        f"recovered_points {report.n_recovered}\n",
        encoding="utf-8",
    )
    (out_dir / "manifest.txt").write_text(manifest_lines(values), encoding="utf-8")
    print(f"scan complete: {len(pairs)} captures, {len(cloud)} points -> {out_dir}")
    return EXIT_OK


def cmd_plan(config: RunConfig, values: dict) -> int:
    fov = horizontal_fov_deg(config.intrinsics)
    increments = rotation_schedule(fov, config.policy.overlap_fraction)
    headings = [sum(increments[:i]) for i in range(len(increments))]
    print(f"fov_deg {_fmt(fov)}")
    print(f"overlap_fraction {_fmt(config.policy.overlap_fraction)}")
    print(f"count {len(increments)}")
    print("headings " + " ".join(_fmt(h) for h in headings))
    total_pulses = 0
    for i, inc in enumerate(increments, start=1):
        cmd, residual = pulses_for_rotation(inc, config.calibration)
        total_pulses += cmd.pulse_count
        actuated = cmd.pulse_count * config.calibration.rotation_deg_per_pulse
        print(
            f"increment {i} delta_deg {_fmt(inc)} pulses {cmd.pulse_count} "
            f"actuated_deg {_fmt(actuated)} residual_deg {_fmt(residual)}"
        )
    total_cmd = PwmCommand(
        Axis.ROTATION,
        Direction.CW,
        total_pulses,
        config.calibration.pwm_freq_hz,
        config.calibration.pwm_duty,
    )
    duration, on_time = pwm_timing(total_cmd)
    print(
        f"total_pulses {total_pulses} total_duration_s {_fmt(duration)} "
        f"total_on_time_s {_fmt(on_time)}"
    )
    return EXIT_OK


def cmd_calibrate(data_path: Path, rate_mm_per_pulse: float) -> int:
    rows = []
    for lineno, raw in enumerate(data_path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"{data_path}:{lineno}: expected 'commanded measured'")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ConfigError(f"{data_path}:{lineno}: non-numeric row {raw!r}") from None
    if len(rows) < 2:
        raise ConfigError(f"{data_path}: need at least 2 calibration rows, found {len(rows)}")
    commanded, measured = zip(*rows)
    scale = calibrate_scale(commanded, measured)
    print(f"scale {_fmt(scale)}")
    print(f"corrected_baseline_mm_per_pulse {_fmt(rate_mm_per_pulse * scale)}")
    return EXIT_OK


def cmd_match(args, config: RunConfig) -> int:
    left_raw = read_pgm(args.left)
    right_raw = read_pgm(args.right)
    if left_raw.shape != right_raw.shape:
        raise ConfigError(
            f"image sizes differ: {left_raw.shape[::-1]} vs {right_raw.shape[::-1]}"
        )
    left = left_raw.astype(float) / float(np.iinfo(left_raw.dtype).max)
    right = right_raw.astype(float) / float(np.iinfo(right_raw.dtype).max)
    disp = match_correlation(
        left,
        right,
        shift_px=args.shift,
        window_px=args.window,
        search_range_px=args.search,
        min_score=config.vision.min_score,
        min_texture=config.vision.min_texture,
        subpixel=config.vision.subpixel,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    # disparity exported as 8.8 fixed point, depth as clamped whole millimeters
    d = disp.disparity
    fixed = np.zeros(d.shape, dtype=np.uint16)
    ok = np.isfinite(d)
    fixed[ok] = np.clip(np.rint(d[ok] * 256.0), 0, 65535).astype(np.uint16)
    write_pgm(out_dir / "disparity.pgm", fixed)

    depth = depth_map_from_disparity(disp, args.baseline_mm, config.intrinsics)
    depth_px = np.zeros(d.shape, dtype=np.uint16)
    ok_z = np.isfinite(depth.depth_mm)
    depth_px[ok_z] = np.clip(np.rint(depth.depth_mm[ok_z]), 0, 65535).astype(np.uint16)
    write_pgm(out_dir / "depth.pgm", depth_px)

    total = d.size
    matched = disp.matched_count
    mean_disp = float(np.mean(d[ok])) if matched else float("nan")
    print(
        f"matched_fraction {_fmt(matched / total)} mean_disparity {_fmt(mean_disp)} "
        f"matched_px {matched} total_px {total}"
    )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stereorig",
        description="Simulate an autonomous rotating stereo rig and reconstruct point clouds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_scan = sub.add_parser("scan", help="run a full capture-and-reconstruct scan")
    p_scan.add_argument("--config", required=True, type=Path)
    p_scan.add_argument("--out", required=True, type=Path)

    p_plan = sub.add_parser("plan", help="print the rotation schedule and pulse plan")
    p_plan.add_argument("--config", required=True, type=Path)

    p_cal = sub.add_parser("calibrate", help="estimate the actuation scale factor")
    p_cal.add_argument("--data", required=True, type=Path)
    p_cal.add_argument("--config", type=Path, default=None)

    p_match = sub.add_parser("match", help="match a stereo PGM pair into disparity/depth maps")
    p_match.add_argument("--left", required=True, type=Path)
    p_match.add_argument("--right", required=True, type=Path)
    p_match.add_argument("--shift", type=int, default=0)
    p_match.add_argument("--search", type=int, default=8)
    p_match.add_argument("--window", type=int, default=7)
    p_match.add_argument("--baseline-mm", type=float, default=100.0)
    p_match.add_argument("--config", type=Path, default=None)
    p_match.add_argument("--out", type=Path, default=Path("."))
    return parser


def _default_config() -> tuple[RunConfig, dict]:
    values = parse_config("")
    return build_config(values), values


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "scan":
            config, values = load_config(args.config, seed_override=_seed_override())
            return cmd_scan(config, values, args.out)
        if args.command == "plan":
            config, values = load_config(args.config, seed_override=_seed_override())
            return cmd_plan(config, values)
        if args.command == "calibrate":
            if args.config is not None:
                config, _ = load_config(args.config)
            else:
                config, _ = _default_config()
            return cmd_calibrate(args.data, config.calibration.baseline_mm_per_pulse)
        if args.command == "match":
            if args.config is not None:
                config, _ = load_config(args.config)
            else:
                config, _ = _default_config()
            return cmd_match(args, config)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
