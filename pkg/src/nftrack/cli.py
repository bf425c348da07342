"""Benchmark command line: synthetic sequences, metrics, the robustness sweep,
and the descriptor pattern dump."""

from __future__ import annotations

import argparse
import csv
import os
import sys


from .core import CameraIntrinsics
from .features import SAMPLING_PATTERN
from .harness import (
    A4_HEIGHT_M,
    A4_WIDTH_M,
    DEFAULT_INTRINSICS,
    TrajectorySpec,
    evaluate,
    load_poses_csv,
    make_target_image,
    render_sequence,
    sweep_min_angle,
    write_metrics_csv,
    write_poses_csv,
)
from .imageio import load_image, save_pgm
from .pipeline import TrackerConfig, build_template, load_config


def _add_common(p):
    p.add_argument("--template", default="synthetic",
                   help="template image path (.pgm/.png) or 'synthetic' (default)")
    p.add_argument("--physical-width", type=float, default=A4_WIDTH_M,
                   help="target width in meters (default DIN A4)")
    p.add_argument("--physical-height", type=float, default=A4_HEIGHT_M)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--fx", type=float, default=DEFAULT_INTRINSICS.fx)
    p.add_argument("--fy", type=float, default=DEFAULT_INTRINSICS.fy)
    p.add_argument("--cx", type=float, default=DEFAULT_INTRINSICS.cx)
    p.add_argument("--cy", type=float, default=DEFAULT_INTRINSICS.cy)


def _add_trajectory(p):
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--trajectory", default="orbit",
                   help="'orbit' or a poses.csv file with explicit poses")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--orbit-radius", type=float, default=0.5)
    p.add_argument("--elev-start", type=float, default=90.0)
    p.add_argument("--elev-end", type=float, default=65.0)
    p.add_argument("--azimuth-start", type=float, default=0.0)
    p.add_argument("--azimuth-end", type=float, default=120.0)
    p.add_argument("--noise-sigma", type=float, default=2.0)
    p.add_argument("--blackout", default=None, metavar="START:END",
                   help="frame range rendered black, e.g. 150:155")
    p.add_argument("--background", choices=("gray", "texture"), default="gray")


def _load_setup(args):
    config = load_config(args.config) if args.config else TrackerConfig()
    if args.template == "synthetic":
        image = make_target_image()
    else:
        image = load_image(args.template)
    template = build_template(image, args.physical_width, args.physical_height,
                              config.features)
    k = CameraIntrinsics(fx=args.fx, fy=args.fy, cx=args.cx, cy=args.cy)
    return template, k, config


def _build_spec(args):
    blackout = None
    if args.blackout:
        start, end = (int(v) for v in args.blackout.split(":", 1))
        blackout = (start, end)
    poses = None
    if args.trajectory != "orbit":
        loaded = load_poses_csv(args.trajectory)
        if any(p is None for p in loaded):
            raise SystemExit("pose file contains blackout rows; use --blackout instead")
        poses = tuple(loaded)
    frames = len(poses) if poses else args.frames
    return TrajectorySpec(frames=frames, orbit_radius=args.orbit_radius,
                          elevation_start=args.elev_start, elevation_end=args.elev_end,
                          azimuth_start=args.azimuth_start, azimuth_end=args.azimuth_end,
                          noise_sigma=args.noise_sigma, blackout=blackout,
                          background=args.background, seed=args.seed, poses=poses)


def cmd_benchmark(args):
    template, k, config = _load_setup(args)
    spec = _build_spec(args)
    sequence = render_sequence(template, spec, k)
    metrics = evaluate(config, sequence)
    write_metrics_csv(metrics, args.out)

    rows = metrics.rows
    found = sum(1 for r in rows if r.pose_found)
    print(f"frames: {len(rows)}  pose found: {found} "
          f"(rate after acquisition: {metrics.pose_found_rate:.3f})")
    print(f"mean corner error: {metrics.mean_corner_err_px:.2f} px")
    for phase in ("detecting", "tracking"):
        if phase in metrics.mean_times:
            mt = metrics.mean_times[phase]["total"] / 1000.0
            p95 = metrics.p95_times[phase]["total"] / 1000.0
            print(f"{phase}: mean {mt:.2f} ms, p95 {p95:.2f} ms")
    if metrics.reacquisition_latencies:
        print(f"re-acquisition latencies (frames): {list(metrics.reacquisition_latencies)}")
    print(f"metrics written to {args.out}")


def cmd_sweep_angle(args):
    template, k, config = _load_setup(args)
    angle = sweep_min_angle(config, template, k)
    text = "none" if angle is None else f"{angle:.0f}"
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(text + "\n")
    print(f"minimum successful elevation: {text} degrees (written to {args.out})")


def cmd_render(args):
    template, k, _ = _load_setup(args)
    spec = _build_spec(args)
    sequence = render_sequence(template, spec, k)
    os.makedirs(args.out_dir, exist_ok=True)
    for i, frame in enumerate(sequence.frames):
        save_pgm(frame, os.path.join(args.out_dir, f"frame_{i:05d}.pgm"))
    write_poses_csv(sequence.poses, os.path.join(args.out_dir, "poses.csv"))
    print(f"wrote {len(sequence.frames)} frames + poses.csv to {args.out_dir}")


def cmd_dump_pattern(args):
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["index", "px", "py", "qx", "qy"])
        for i, (px, py, qx, qy) in enumerate(SAMPLING_PATTERN):
            w.writerow([i, int(px), int(py), int(qx), int(qy)])
    finally:
        if args.out:
            out.close()
            print(f"pattern written to {args.out}")


def cmd_make_target(args):
    image = make_target_image(seed=args.seed)
    save_pgm(image, args.out)
    print(f"synthetic target written to {args.out}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="nftrack", description="Planar natural-feature tracking benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("benchmark", help="run the tracker over a synthetic sequence")
    _add_common(p)
    _add_trajectory(p)
    p.add_argument("--out", default="metrics.csv")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep-angle", help="minimum-elevation robustness sweep")
    _add_common(p)
    p.add_argument("--out", default="angle.txt")
    p.set_defaults(func=cmd_sweep_angle)

    p = sub.add_parser("render", help="write a synthetic sequence as PGM + poses.csv")
    _add_common(p)
    _add_trajectory(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("dump-pattern", help="descriptor sampling pattern as CSV")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dump_pattern)

    p = sub.add_parser("make-target", help="write the synthetic target image as PGM")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default="target.pgm")
    p.set_defaults(func=cmd_make_target)

    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
