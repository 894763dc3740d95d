"""End-to-end replay: IMU fusion, steering selection, matched filter, beamform, gain, export.

Output directory layout written by :func:`run_pipeline`::

    frame_0000.csv   image (see ``beamformer.write_image_csv``)
    frame_0000.pgm   16-bit graymap plus ``frame_0000.txt`` sidecar
    frames.csv       index,timestamp_s,theta_i_deg,theta_c_deg,gain_applied
    timing.json      per-stage durations (not part of the determinism contract)
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diagnostics
from .ahrs import AttitudeTracker, ImuSample, read_imu_stream
from .beamformer import AcousticImage, write_image_csv, write_image_pgm
from .config import PipelineConfig, derive_seed
from .dsp import RawFrame
from .gain import UNITY, GainTable, apply_gain, calibrate_gain, read_gain_table, run_calibration_sweep
from .geometry import MicArray, random_disc_layout
from .rig import Rig, default_max_range
from .simulator import frame_times, synthesize_imu
from .steering import (
    SteeringBank,
    build_bank,
    load_bank,
    save_bank,
    select_steering,
    single_angle_bank,
)

STAGES = ("fusion", "selection", "matched_filter", "beamform", "gain", "export")
WARMUP_FRAMES = 2
MIN_BENCH_REPETITIONS = 100


class PipelineError(RuntimeError):
    """A frame failed; ``frame_index`` names it."""

    def __init__(self, frame_index: int, cause: BaseException) -> None:
        super().__init__(f"frame {frame_index}: {cause}")
        self.frame_index = frame_index


def build_bank_from_config(config: PipelineConfig, array: MicArray) -> SteeringBank:
    """Build the bank, going through the cache file when one is configured.

    A fresh build is saved and then reloaded so every run with a cache sees
    the same 32-bit delays whether or not the cache already existed.
    """
    b = config.raw["bank"]
    kwargs = dict(
        azimuths=config.azimuths(),
        theta_c_min=float(b["theta_c_min"]),
        theta_c_max=float(b["theta_c_max"]),
        resolution=float(b["resolution"]),
        c=config.speed_of_sound,
    )
    cache = config.bank_cache()
    if cache is None:
        return build_bank(array, **kwargs)
    if cache.is_file():
        bank = load_bank(cache, array)
        expected = (kwargs["theta_c_min"], kwargs["theta_c_max"], kwargs["resolution"], kwargs["c"])
        actual = (bank.theta_c_min, bank.theta_c_max, bank.resolution, bank.speed_of_sound)
        if expected == actual and np.array_equal(bank.azimuths, np.asarray(kwargs["azimuths"])):
            return bank
        diagnostics.warn("bank_cache_stale", f"{cache} does not match the configured grid; rebuilding")
    cache.parent.mkdir(parents=True, exist_ok=True)
    save_bank(build_bank(array, **kwargs), cache)
    return load_bank(cache, array)


def build_rig(config: PipelineConfig) -> Rig:
    array = config.array()
    bf = config.raw["beamformer"]
    return Rig(
        array=array,
        emission=config.emission(),
        directivity=config.directivity(),
        sample_rate=config.sample_rate,
        bank=build_bank_from_config(config, array),
        decimation=int(bf["decimation"]),
        upsample=int(bf["upsample"]),
    )


def calibrate_from_config(config: PipelineConfig, rig: Rig) -> GainTable:
    cal = config.raw["calibration"]
    ref = float(cal["reference_range"])
    measurements = run_calibration_sweep(
        rig, config.calibration_angles(), ref, seed=derive_seed(config.seed, "calibration")
    )
    return calibrate_gain(measurements, ref)


def gain_from_config(config: PipelineConfig, rig: Rig) -> GainTable:
    """Configured gain table: loaded from file, or calibrated in simulation."""
    path = config.gain_path()
    if path is not None:
        return read_gain_table(path, float(config.raw["calibration"]["reference_range"]))
    return calibrate_from_config(config, rig)


def max_range_from_config(config: PipelineConfig) -> float:
    value = config.raw["beamformer"].get("max_range")
    return float(value) if value is not None else default_max_range(config.scene())


def imu_stream_from_config(config: PipelineConfig) -> list[ImuSample]:
    """Recorded stream if configured, else synthesized with a lead-in before the first frame."""
    a = config.raw["ahrs"]
    if a.get("imu_stream"):
        return read_imu_stream(config._path(str(a["imu_stream"])))
    profile = config.tilt_profile()
    return synthesize_imu(
        profile,
        rate=float(a["rate"]),
        gyro_noise=float(a["gyro_noise"]),
        accel_noise=float(a["accel_noise"]),
        seed=derive_seed(config.seed, "imu"),
        start=profile.start - float(a["lead_in"]),
        end=profile.end,
    )


def simulate_frames(config: PipelineConfig, rig: Rig, limit: int | None = None) -> list[RawFrame]:
    """Raw frames along the configured tilt profile (the pipeline's sensor input)."""
    profile = config.tilt_profile()
    scene = config.scene()
    times = frame_times(profile, float(config.raw["simulator"]["frame_rate"]))
    if limit is not None:
        times = times[:limit]
    return [
        rig.frame(scene, float(profile.theta_at(t)), derive_seed(config.seed, "frame", k), timestamp=float(t))
        for k, t in enumerate(times)
    ]


@dataclass(frozen=True)
class FrameRecord:
    index: int
    timestamp: float
    theta_i: float
    theta_c: float
    gain_applied: float


@dataclass
class TimingReport:
    """Wall-clock seconds per stage and frame, warm-up frames excluded."""

    stages: dict[str, list[float]] = field(default_factory=lambda: {s: [] for s in STAGES})
    warmup_frames: int = WARMUP_FRAMES

    @property
    def frame_count(self) -> int:
        return len(self.stages["fusion"])

    @property
    def totals(self) -> list[float]:
        return [sum(parts) for parts in zip(*(self.stages[s] for s in STAGES))]

    @property
    def mean_total(self) -> float:
        return statistics.fmean(self.totals) if self.frame_count else 0.0

    @property
    def std_total(self) -> float:
        return statistics.pstdev(self.totals) if self.frame_count > 1 else 0.0

    def stage_mean(self, stage: str) -> float:
        values = self.stages[stage]
        return statistics.fmean(values) if values else 0.0

    @property
    def stabilization_overhead(self) -> float:
        """Share of per-frame time spent on steering selection and gain."""
        total = sum(self.totals)
        if total <= 0:
            return 0.0
        return (sum(self.stages["selection"]) + sum(self.stages["gain"])) / total

    def to_dict(self) -> dict:
        return {
            "frame_count": self.frame_count,
            "warmup_frames_excluded": self.warmup_frames,
            "mean_total_s": self.mean_total,
            "std_total_s": self.std_total,
            "stabilization_overhead": self.stabilization_overhead,
            "stage_mean_s": {s: self.stage_mean(s) for s in STAGES},
        }


def _write_frames_csv(records: Sequence[FrameRecord], path: Path) -> None:
    lines = ["index,timestamp_s,theta_i_deg,theta_c_deg,gain_applied"]
    lines += [f"{r.index},{r.timestamp!r},{r.theta_i!r},{r.theta_c!r},{r.gain_applied!r}" for r in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_image(image: AcousticImage, out_dir: Path, stem: str) -> None:
    write_image_csv(image, out_dir / f"{stem}.csv")
    write_image_pgm(image, out_dir / f"{stem}.pgm")


def run_pipeline(
    config: PipelineConfig,
    stabilize: bool = True,
    gain: bool = True,
    export: bool = True,
    rig: Rig | None = None,
    gain_table: GainTable | None = None,
    frames: Sequence[RawFrame] | None = None,
    imu_stream: Sequence[ImuSample] | None = None,
) -> tuple[list[AcousticImage], TimingReport]:
    """Process every frame of the configured run in timestamp order.

    Each frame reads the latest attitude estimate at or before its timestamp.
    With ``stabilize=False`` the bank entry at ``theta_c = 0`` is used; with
    ``gain=False`` no factor is applied. ``rig``, ``gain_table``, ``frames``
    and ``imu_stream`` override what the config would build.
    """
    rig = rig or build_rig(config)
    if not gain:
        table = UNITY
    else:
        table = gain_table or gain_from_config(config, rig)
    frames = list(frames) if frames is not None else simulate_frames(config, rig)
    tracker = AttitudeTracker(
        imu_stream if imu_stream is not None else imu_stream_from_config(config),
        beta=float(config.raw["ahrs"]["beta"]),
        warmup=float(config.raw["ahrs"]["warmup"]),
        initial_gain=float(config.raw["ahrs"]["initial_gain"]),
    )
    max_range = max_range_from_config(config)
    out_dir = config.output_dir
    if export:
        out_dir.mkdir(parents=True, exist_ok=True)

    report = TimingReport()
    images: list[AcousticImage] = []
    records: list[FrameRecord] = []
    clock = time.perf_counter
    for k, frame in enumerate(frames):
        try:
            t0 = clock()
            estimate = tracker.advance_to(frame.timestamp)
            t1 = clock()
            theta_c, delays = select_steering(rig.bank, estimate.theta_i if stabilize else 0.0)
            t2 = clock()
            filtered = rig.filtered(frame)
            t3 = clock()
            image = rig.beamform(filtered, delays, max_range)
            t4 = clock()
            image = apply_gain(image, table, theta_c)
            t5 = clock()
            if export:
                export_image(image, out_dir, f"frame_{k:04d}")
            t6 = clock()
        except Exception as exc:
            raise PipelineError(k, exc) from exc
        images.append(image)
        records.append(FrameRecord(k, frame.timestamp, estimate.theta_i, theta_c, image.gain_applied))
        if k >= WARMUP_FRAMES or len(frames) <= WARMUP_FRAMES:
            for stage, (a, b) in zip(STAGES, [(t0, t1), (t1, t2), (t2, t3), (t3, t4), (t4, t5), (t5, t6)]):
                report.stages[stage].append(b - a)
    if len(frames) <= WARMUP_FRAMES:
        report.warmup_frames = 0
    if export:
        _write_frames_csv(records, out_dir / "frames.csv")
        (out_dir / "timing.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return images, report


def read_frames_csv(path: str | Path) -> list[FrameRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines()[1:]:
        if line:
            i, t, ti, tc, g = line.split(",")
            out.append(FrameRecord(int(i), float(t), float(ti), float(tc), float(g)))
    return out


@dataclass(frozen=True)
class BenchRow:
    bank_size: int
    median_s: float
    p90_s: float


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]
    repetitions: int

    @property
    def constant_time(self) -> bool:
        """Medians within 5x of each other and each under 1 ms."""
        medians = [r.median_s for r in self.rows]
        return max(medians) < 1e-3 and max(medians) <= 5.0 * min(medians)

    def to_text(self) -> str:
        lines = [f"{'bank_size':>9}  {'median_us':>10}  {'p90_us':>10}"]
        lines += [f"{r.bank_size:>9}  {r.median_s * 1e6:>10.3f}  {r.p90_s * 1e6:>10.3f}" for r in self.rows]
        lines.append(f"constant_time={self.constant_time} repetitions={self.repetitions}")
        return "\n".join(lines)


def bank_of_size(size: int, array: MicArray | None = None, azimuths: Sequence[float] | None = None) -> SteeringBank:
    """Bank spanning -30..30 deg with ``size`` entries (a single entry sits at 0)."""
    array = array or random_disc_layout()
    if size < 1:
        raise ValueError("bank size must be positive")
    if size == 1:
        return single_angle_bank(array, 0.0, azimuths)
    return build_bank(array, azimuths, -30.0, 30.0, 60.0 / (size - 1))


def bench_selection(
    bank_sizes: Sequence[int],
    repetitions: int = 1000,
    seed: int = 0,
    array: MicArray | None = None,
    banks: dict[int, SteeringBank] | None = None,
) -> BenchReport:
    """Median ``select_steering`` latency per bank size over random in-range tilts."""
    if repetitions < MIN_BENCH_REPETITIONS:
        raise ValueError(f"repetitions must be at least {MIN_BENCH_REPETITIONS}")
    rng = np.random.default_rng(derive_seed(seed, "bench"))
    tilts = [float(v) for v in rng.uniform(-30.0, 30.0, repetitions)]
    rows = []
    for size in bank_sizes:
        bank = (banks or {}).get(size) or bank_of_size(size, array)
        select_steering(bank, 0.0)
        samples = []
        for theta in tilts:
            t0 = time.perf_counter_ns()
            select_steering(bank, theta)
            samples.append((time.perf_counter_ns() - t0) * 1e-9)
        rows.append(BenchRow(size, float(np.median(samples)), float(np.percentile(samples, 90))))
    return BenchReport(tuple(rows), repetitions)
