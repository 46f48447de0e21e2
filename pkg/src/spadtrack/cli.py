"""``spadtrack`` command line: one subcommand per experiment.

Exit codes: 0 success, 2 configuration or input errors, 1 runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import SPEED_OF_LIGHT, ConfigError, SensorConfig, config_from_mapping, gate_for_distance, load_config
from .golden import GoldenFormatError, check_vector, random_vectors, read_vectors, write_vectors
from .pwl import DEFAULT_TABLE, build_pwl_table
from .readout import FrameMode, OutputFormat, SmartFilter, max_frame_rate
from .scene import SceneError, approaching_target, flat_scene, load_sequence, moving_ball, spad_step_pattern

EXIT_CONFIG = 2
EXIT_RUNTIME = 1

log = logging.getLogger("spadtrack")


def _config(args) -> SensorConfig:
    cfg = load_config(args.config) if args.config else SensorConfig()
    if args.set:
        pairs = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            k, v = item.split("=", 1)
            pairs[k] = v
        cfg = config_from_mapping(pairs, cfg)
    return cfg


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _scenes(args, cfg: SensorConfig, default):
    if args.scene_dir:
        return load_sequence(args.scene_dir)
    return default(cfg)


def _default_tracking(cfg: SensorConfig, frames: int = 24):
    rate = cfg.ambient_rate_for_level(20)
    bin_m = cfg.bin_width_s * SPEED_OF_LIGHT / 2
    start = (9 * cfg.gate_step_bins + 3.5) * bin_m
    return approaching_target(frames, start, -0.25, background_m=(12 * cfg.gate_step_bins + 3.5) * bin_m,
                              ambient_rate=rate)


def _default_ball(cfg: SensorConfig, frames: int = 24):
    bin_m = cfg.bin_width_s * SPEED_OF_LIGHT / 2
    wall = (6 * cfg.gate_step_bins + 3.5) * bin_m
    ball = (3 * cfg.gate_step_bins + 3.5) * bin_m
    scenes, _ = moving_ball(frames, wall, ball, ambient_rate=cfg.ambient_rate_for_level(2))
    return scenes


def cmd_fpr(args, cfg):
    rows = ex.run_fpr(cfg, _floats(args.levels), [int(a) for a in _floats(args.alphas)], args.frames,
                      args.seed, args.trials, args.out)
    for r in rows:
        print(f"level={r['level']:g} alpha={r['alpha']} in_pixel={r['fpr_in_pixel']:.5f} "
              f"ideal={r['fpr_ideal_mc']:.5f} gaussian={r['tail_gaussian']:.5f}")


def cmd_range_sweep(args, cfg):
    if args.calibrate:
        d, eta, sbr, amb = _floats(args.calibrate)
        cfg = cfg.replace(signal_ref_counts=ex.calibrate_link_budget(cfg, d, eta, sbr, amb))
        print(f"signal_ref_counts={cfg.signal_ref_counts:.6g}")
    pts = ex.run_range_sweep(cfg, _floats(args.distances), _floats(args.reflectivities), args.frames,
                             args.ambient, args.seed, args.out)
    for p in pts:
        print(f"d={p.distance_m:g} eta={p.reflectivity:g} sbr={p.sbr:.4g} det={p.detection_rate:.3f} "
              f"err={p.mean_error_m:+.4f} std={p.std_m:.4f}")


def cmd_tracking_sequence(args, cfg):
    scenes = _scenes(args, cfg, _default_tracking)
    run = ex.run_tracking_sequence(cfg, scenes, args.seed, args.out)
    conv = run.converged_frame
    print(f"frames={len(scenes)} converged={int((conv > 0).sum())}/{conv.size} "
          f"max_convergence_frame={int(conv.max())}")


def cmd_dynamic_vision(args, cfg):
    scenes = _scenes(args, cfg, _default_ball)
    run = ex.run_dynamic_vision(cfg, scenes, args.seed, args.format, args.warmup, args.out, args.filter)
    for key, vol in run.volume.items():
        print(f"{key}: bits={vol.total_bits} nonzero={vol.nonzero_fraction:.4f} "
              f"vs_histogram={vol.compression_vs_histogram:.4f}")


def cmd_compression_report(args, cfg):
    scenes = _scenes(args, cfg, _default_ball)
    for r in ex.run_compression_report(cfg, scenes, args.seed, outdir=args.out):
        print(f"{r['mode']}: bits={r['total_bits']} vs_histogram={r['compression_vs_histogram']:.4f}")


def cmd_intensity_demo(args, cfg):
    scene = load_sequence(args.scene_dir)[0] if args.scene_dir else flat_scene(
        30.0, 0.5, cfg.ambient_rate_for_level(50))
    frame = ex.run_intensity_demo(cfg, scene, args.seed, args.out)
    print(f"intensity frame {frame.counts.shape} mean={frame.counts.mean():.2f}")


def cmd_highres_demo(args, cfg):
    bin_m = cfg.bin_width_s * SPEED_OF_LIGHT / 2
    if args.scene_dir:
        scene = load_sequence(args.scene_dir)[0]
    else:
        scene = spad_step_pattern((6 * cfg.gate_step_bins + 2.0) * bin_m, bin_m / 4.0,
                                  ambient_rate=cfg.ambient_rate_for_level(1))
    gate = args.gate if args.gate is not None else gate_for_distance(cfg, float(np.nanmedian(scene.depth_m)))
    hi = ex.run_highres_demo(cfg, scene, args.seed, gate, args.out)
    print(f"high-resolution depth {hi.shape} valid={int(np.isfinite(hi).sum())}")


def cmd_pwl_table(args, cfg):
    table = build_pwl_table(args.budget) if args.budget is not None else DEFAULT_TABLE
    print("start shift offset")
    for start, shift, offset in zip(table.starts, table.shifts, table.offsets):
        print(start, shift, offset)
    print(f"max_error={table.max_error():.4f}")


def cmd_frame_rates(args, cfg):
    for fmt in (OutputFormat.HISTOGRAM, OutputFormat.BIN_DEPTH, OutputFormat.SUBBIN_DEPTH, OutputFormat.INTENSITY):
        print(f"{fmt.value}: {max_frame_rate(FrameMode(fmt))} fps")


def cmd_golden(args, cfg):
    if args.write:
        write_vectors(random_vectors(args.count, args.seed), args.write, comment=f"seed={args.seed}")
        print(f"wrote {args.count} vectors to {args.write}")
        return 0
    vectors = read_vectors(args.check)
    bad = [i for i, v in enumerate(vectors) if not check_vector(v)]
    print(f"{len(vectors) - len(bad)}/{len(vectors)} vectors match")
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spadtrack", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="INI file with a [sensor] section")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config value")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", type=Path, default=None, help="output directory for CSV/PGM artifacts")
        sp.set_defaults(func=func)
        return sp

    sp = add("fpr", cmd_fpr, "false-positive rate versus background level")
    sp.add_argument("--levels", default="20,50,100,200,500,1000,2000")
    sp.add_argument("--alphas", default="1,2")
    sp.add_argument("--frames", type=int, default=500)
    sp.add_argument("--trials", type=int, default=1_000_000)

    sp = add("range-sweep", cmd_range_sweep, "accuracy and precision versus distance")
    sp.add_argument("--distances", default="10,20,30,40,50,60,70")
    sp.add_argument("--reflectivities", default="0.2")
    sp.add_argument("--frames", type=int, default=168)
    sp.add_argument("--ambient", type=float, default=50.0, help="background counts per bin")
    sp.add_argument("--calibrate", metavar="D,ETA,SBR,AMBIENT",
                    help="set signal_ref_counts from a link-budget anchor first")

    for name, func, text in (("tracking-sequence", cmd_tracking_sequence, "per-frame gate/depth dumps"),
                             ("dynamic-vision", cmd_dynamic_vision, "motion-only readout of a moving scene"),
                             ("compression-report", cmd_compression_report, "data volume per readout mode"),
                             ("intensity-demo", cmd_intensity_demo, "one intensity frame"),
                             ("highres-demo", cmd_highres_demo, "time-multiplexed per-SPAD depth")):
        sp = add(name, func, text)
        sp.add_argument("--scene-dir", type=Path, help="directory with manifest.json and scene maps")
        if name == "dynamic-vision":
            sp.add_argument("--format", default="bin_depth", choices=[f.value for f in OutputFormat
                                                                       if f is not OutputFormat.INTENSITY])
            sp.add_argument("--filter", default="motion_only", choices=[f.value for f in SmartFilter],
                            help="smart filter (motion_only is the experiment's filter)")
            sp.add_argument("--warmup", type=int, default=0)
        if name == "highres-demo":
            sp.add_argument("--gate", type=int, default=None)

    sp = add("pwl-table", cmd_pwl_table, "print the threshold square-root table")
    sp.add_argument("--budget", type=float, default=None, help="fit a fresh table to this error budget")
    add("frame-rates", cmd_frame_rates, "maximum frame rate per readout format")
    sp = add("golden", cmd_golden, "write or check pixel-logic golden vectors")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--write", type=Path)
    g.add_argument("--check", type=Path)
    sp.add_argument("--count", type=int, default=200)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "config.json").write_text(json.dumps(
                {"command": args.command, "seed": args.seed, "config": cfg.to_dict()}, indent=1))
        rc = args.func(args, cfg)
    except (ConfigError, SceneError, GoldenFormatError, ex.LinkBudgetError) as exc:
        print(f"spadtrack: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"spadtrack: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
