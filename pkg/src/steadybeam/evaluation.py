"""Image similarity, the tilt-sweep experiment and tilt distribution statistics.

Sweep report CSV::

    # config_hash=<hex>
    # seed=<int>
    # steadybeam=<version>
    # numpy=<version>
    tilt_deg,sim_stabilized,sim_unstabilized
    -30.0,0.97...,0.41...
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .beamformer import AcousticImage, _check_axes
from .gain import GainTable, apply_gain
from .rig import Rig, default_max_range
from .simulator import Scene, sweep_seeds
from .steering import select_steering

THREADS_ENV = "STEADYBEAM_THREADS"


def cosine_similarity(a: AcousticImage, b: AcousticImage) -> float:
    """Cosine of the angle between the flattened energy maps."""
    _check_axes(a, b)
    x = a.energy.ravel()
    y = b.energy.ravel()
    mx, my = np.max(np.abs(x)), np.max(np.abs(y))
    if mx == 0 or my == 0:
        raise ValueError("cosine similarity is undefined for an all-zero image")
    if np.array_equal(x, y):
        return 1.0
    # pre-scaling keeps the norms clear of underflow and overflow
    x, y = x / mx, y / my
    return float(min(1.0, np.dot(x, y) / (np.linalg.norm(x) * np.linalg.norm(y))))


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[tuple[float, float, float], ...]
    config_hash: str
    seed: int = 0

    def row(self, tilt: float) -> tuple[float, float, float]:
        for r in self.rows:
            if r[0] == tilt:
                return r
        raise KeyError(tilt)

    def to_csv(self) -> str:
        lines = [
            f"# config_hash={self.config_hash}",
            f"# seed={self.seed}",
            f"# steadybeam={__version__}",
            f"# numpy={np.__version__}",
            "tilt_deg,sim_stabilized,sim_unstabilized",
        ]
        lines += [f"{t!r},{s!r},{u!r}" for t, s, u in self.rows]
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def read_sweep_csv(path: str | Path) -> SweepReport:
    meta: dict[str, str] = {}
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line and not line.startswith("tilt_deg"):
            t, s, u = (float(v) for v in line.split(","))
            rows.append((t, s, u))
    return SweepReport(tuple(rows), meta.get("config_hash", ""), int(meta.get("seed", 0)))


def worker_count(default: int | None = None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = default or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def config_digest(rig: Rig, scene: Scene, table: GainTable, tilts: Sequence[float], seed: int,
                  max_range: float) -> str:
    bank = rig.bank
    doc = {
        "array": rig.array.digest(),
        "emission": asdict(rig.emission),
        "directivity": asdict(rig.directivity),
        "sample_rate": rig.sample_rate,
        "decimation": rig.decimation,
        "upsample": rig.upsample,
        "bank": [bank.theta_c_min, bank.theta_c_max, bank.resolution, bank.speed_of_sound,
                 bank.azimuths.tolist()],
        "gain": [list(e) for e in table.entries],
        "scene": [[*r.position, r.reflectivity] for r in scene.reflectors],
        "noise_sigma": scene.noise_sigma,
        "tilts": [float(t) for t in tilts],
        "seed": seed,
        "max_range": max_range,
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def run_tilt_sweep(
    rig: Rig,
    scene: Scene,
    gain_table: GainTable,
    tilts: Sequence[float],
    seed: int = 0,
    max_range: float | None = None,
    workers: int | None = None,
) -> SweepReport:
    """Compare stabilized and unstabilized images against the untilted reference.

    One frame is simulated per tilt (seed ``seed + index``). The frame at
    tilt 0 beamformed at ``theta_c = 0`` is the reference. Each frame is
    beamformed twice: at ``theta_c = 0`` without gain (unstabilized) and with
    the bank selection plus gain compensation (stabilized).
    """
    tilts = [float(t) for t in tilts]
    if 0.0 not in tilts:
        raise ValueError("sweep tilts must include 0 (the reference)")
    if max_range is None:
        max_range = default_max_range(scene)
    seeds = sweep_seeds(seed, len(tilts))
    _, level = select_steering(rig.bank, 0.0)

    def measure(k: int) -> tuple[AcousticImage, AcousticImage]:
        frame = rig.frame(scene, tilts[k], seeds[k])
        filtered = rig.filtered(frame)
        unstabilized = rig.beamform(filtered, level, max_range)
        theta_c, delays = select_steering(rig.bank, tilts[k])
        stabilized = apply_gain(rig.beamform(filtered, delays, max_range), gain_table, theta_c)
        return stabilized, unstabilized

    n_workers = workers or worker_count()
    if n_workers > 1 and len(tilts) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            images = list(pool.map(measure, range(len(tilts))))
    else:
        images = [measure(k) for k in range(len(tilts))]

    k0 = tilts.index(0.0)
    reference = images[k0][1]
    rows = tuple(
        (t, cosine_similarity(stab, reference), cosine_similarity(unstab, reference))
        for t, (stab, unstab) in zip(tilts, images)
    )
    return SweepReport(rows, config_digest(rig, scene, gain_table, tilts, seed, max_range), seed)


@dataclass(frozen=True)
class TiltStats:
    mean: float
    ci95_low: float
    ci95_high: float
    min: float
    max: float


def tilt_statistics(samples: Sequence[float]) -> TiltStats:
    """Mean, central 95% percentile interval, and extremes of observed tilts."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("tilt statistics need at least two samples")
    low, high = np.percentile(x, [2.5, 97.5])
    mean = float(x.mean())
    # keeps low <= mean <= high for constant input (rounding) and extreme skew
    return TiltStats(mean, float(min(low, mean)), float(max(high, mean)), float(x.min()), float(x.max()))
