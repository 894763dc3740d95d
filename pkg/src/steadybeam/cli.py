"""Command-line entry point: ``steadybeam <subcommand> [options]``.

Global options may appear before or after the subcommand. Exit status is 0
on success, 1 on usage or configuration errors, 2 on processing errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, diagnostics
from .ahrs import write_imu_stream
from .config import ConfigError, PipelineConfig
from .dsp import read_raw_frame, write_raw_frame
from .evaluation import run_tilt_sweep
from .gain import UNITY, write_gain_table
from .pipeline import (
    bench_selection,
    build_rig,
    calibrate_from_config,
    export_image,
    gain_from_config,
    imu_stream_from_config,
    max_range_from_config,
    run_pipeline,
    simulate_frames,
)
from .steering import bank_memory_bytes, save_bank, select_steering


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default, help="YAML configuration file")
    parser.add_argument("--seed", type=int, metavar="N", default=default, help="root seed override")
    parser.add_argument("--out", metavar="DIR", default=default, help="output directory override")
    parser.add_argument("--no-stabilize", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="steer at theta_c = 0 regardless of attitude")
    parser.add_argument("--no-gain", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="skip gain compensation")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="steadybeam", description="IMU-stabilized delay-and-sum sonar imaging.")
    parser.add_argument("--version", action="version", version=f"steadybeam {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        _global_options(p, suppress=True)
        return p

    p = add("simulate", "simulate raw frames along the configured tilt profile")
    p.add_argument("--frames", type=int, default=None, help="limit the number of frames")
    add("imu-sim", "synthesize the IMU stream for the configured tilt profile")
    add("calibrate", "run the simulated calibration sweep and write a gain table")
    add("bank", "build (and cache) the steering bank and report its memory size")
    p = add("beamform", "beamform raw frame files into images")
    p.add_argument("frames", nargs="+", help="raw frame files")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--tilt", type=float, default=None, help="measured tilt theta_i in degrees")
    group.add_argument("--theta-c", type=float, default=None, help="steering elevation, bypassing selection")
    add("sweep", "tilt sweep comparing stabilized and unstabilized images")
    add("pipeline", "replay IMU and frames through the full pipeline")
    p = add("bench", "steering-selection latency table")
    p.add_argument("--sizes", type=int, nargs="+", default=[61, 610])
    p.add_argument("--repetitions", type=int, default=1000)
    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = PipelineConfig.load(args.config, overrides)
    if args.out is not None:
        # relative to the working directory, not the config file
        config.raw["output"] = str(Path(args.out).resolve())
    return config


def _out(config: PipelineConfig) -> Path:
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(config: PipelineConfig, args: argparse.Namespace) -> int:
    rig = build_rig(config)
    out = _out(config)
    frames = simulate_frames(config, rig, args.frames)
    for k, frame in enumerate(frames):
        write_raw_frame(frame, out / f"frame_{k:04d}.sbraw")
    print(f"wrote {len(frames)} frames to {out}")
    return 0


def cmd_imu_sim(config: PipelineConfig, args: argparse.Namespace) -> int:
    samples = imu_stream_from_config(config)
    path = _out(config) / "imu.csv"
    write_imu_stream(samples, path)
    print(f"wrote {len(samples)} IMU samples to {path}")
    return 0


def cmd_calibrate(config: PipelineConfig, args: argparse.Namespace) -> int:
    table = calibrate_from_config(config, build_rig(config))
    path = _out(config) / "gain_table.csv"
    write_gain_table(table, path)
    lo, hi = table.elevations[0], table.elevations[-1]
    print(f"gain table {lo:g}..{hi:g} deg: factor({lo:g})={table.factor_at(lo):.4f} "
          f"factor({hi:g})={table.factor_at(hi):.4f} -> {path}")
    return 0


def cmd_bank(config: PipelineConfig, args: argparse.Namespace) -> int:
    rig = build_rig(config)
    bank = rig.bank
    if config.bank_cache() is None:
        path = _out(config) / "bank.sbbank"
        save_bank(bank, path)
    else:
        path = config.bank_cache()
    m = bank.matrices[0]
    print(f"{len(bank)} matrices x {m.num_mics} mics x {len(bank.azimuths)} azimuths = "
          f"{bank_memory_bytes(bank)} bytes -> {path}")
    return 0


def cmd_beamform(config: PipelineConfig, args: argparse.Namespace) -> int:
    rig = build_rig(config)
    if args.theta_c is not None:
        theta_c, delays = args.theta_c, rig.bank.at(args.theta_c)
    else:
        tilt = 0.0 if args.no_stabilize or args.tilt is None else args.tilt
        theta_c, delays = select_steering(rig.bank, tilt)
    table = UNITY if args.no_gain else gain_from_config(config, rig)
    max_range = max_range_from_config(config)
    out = _out(config)
    for name in args.frames:
        frame = read_raw_frame(name)
        image = rig.image(frame, delays, max_range).scaled(table.factor_at(theta_c))
        export_image(image, out, Path(name).stem)
    print(f"beamformed {len(args.frames)} frames at theta_c={theta_c:g} -> {out}")
    return 0


def cmd_sweep(config: PipelineConfig, args: argparse.Namespace) -> int:
    rig = build_rig(config)
    table = UNITY if args.no_gain else gain_from_config(config, rig)
    report = run_tilt_sweep(rig, config.scene(), table, config.sweep_tilts(), config.seed,
                            max_range_from_config(config))
    path = _out(config) / "sweep.csv"
    report.write_csv(path)
    print(f"{len(report.rows)} rows -> {path}")
    return 0


def cmd_pipeline(config: PipelineConfig, args: argparse.Namespace) -> int:
    images, timing = run_pipeline(config, stabilize=not args.no_stabilize, gain=not args.no_gain)
    t = timing.to_dict()
    print(f"{len(images)} frames -> {config.output_dir}")
    print(f"mean frame time {t['mean_total_s'] * 1e3:.1f} ms (std {t['std_total_s'] * 1e3:.1f} ms, "
          f"{t['frame_count']} frames after warm-up), stabilization overhead "
          f"{t['stabilization_overhead'] * 100:.3f}%")
    return 0


def cmd_bench(config: PipelineConfig, args: argparse.Namespace) -> int:
    if args.repetitions < 100:
        raise UsageError("--repetitions must be at least 100")
    report = bench_selection(args.sizes, args.repetitions, config.seed, config.array())
    print(report.to_text())
    return 0 if report.constant_time else 2


COMMANDS = {
    "simulate": cmd_simulate,
    "imu-sim": cmd_imu_sim,
    "calibrate": cmd_calibrate,
    "bank": cmd_bank,
    "beamform": cmd_beamform,
    "sweep": cmd_sweep,
    "pipeline": cmd_pipeline,
    "bench": cmd_bench,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        print(f"steadybeam: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args)
        status = COMMANDS[args.command](config, args)
    except (ConfigError, UsageError) as exc:
        print(f"steadybeam: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # processing failure
        print(f"steadybeam: {args.command} failed: {exc}", file=sys.stderr)
        return 2
    counts = diagnostics.snapshot()
    if counts:
        print("warnings: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
