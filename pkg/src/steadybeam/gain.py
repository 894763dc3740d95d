"""Elevation-dependent gain compensation for emitter directivity loss.

Gain table file: one ``elevation_deg,factor`` pair per line, ``#`` comments
allowed. Elevations are steering elevations ``theta_c``; the table must hold
``0,1``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import diagnostics
from .beamformer import AcousticImage
from .rig import Rig
from .simulator import Reflector, Scene
from .steering import select_steering

DEFAULT_REFERENCE_RANGE = 2.0


@dataclass(frozen=True)
class GainTable:
    entries: tuple[tuple[float, float], ...]
    reference_range: float = DEFAULT_REFERENCE_RANGE

    def __post_init__(self) -> None:
        entries = tuple((float(e), float(f)) for e, f in self.entries)
        if not entries:
            raise ValueError("gain table is empty")
        elevations = [e for e, _ in entries]
        if any(b <= a for a, b in zip(elevations, elevations[1:])):
            raise ValueError("gain table elevations must be strictly increasing")
        zero = [f for e, f in entries if e == 0.0]
        if len(zero) != 1 or zero[0] != 1.0:
            raise ValueError("gain table needs exactly one entry at 0 deg with factor 1")
        if any(not math.isfinite(f) or f <= 0 for _, f in entries):
            raise ValueError("gain factors must be positive and finite")
        object.__setattr__(self, "entries", entries)

    @property
    def elevations(self) -> list[float]:
        return [e for e, _ in self.entries]

    @property
    def factors(self) -> list[float]:
        return [f for _, f in self.entries]

    def factor_at(self, theta_c: float) -> float:
        """Factor for ``theta_c``: exact entry, linear interpolation between entries,
        end value (counted as ``gain_clamped``) outside the table."""
        elev = self.elevations
        facs = self.factors
        if theta_c < elev[0] or theta_c > elev[-1]:
            diagnostics.warn("gain_clamped", f"theta_c {theta_c} outside gain table")
            return facs[0] if theta_c < elev[0] else facs[-1]
        k = bisect.bisect_left(elev, theta_c)
        if elev[k] == theta_c:
            return facs[k]
        lo, hi = k - 1, k
        w = (theta_c - elev[lo]) / (elev[hi] - elev[lo])
        return facs[lo] + w * (facs[hi] - facs[lo])


UNITY = GainTable(((0.0, 1.0),))


def calibrate_gain(measurements: Iterable[tuple[float, float]],
                   reference_range: float = DEFAULT_REFERENCE_RANGE) -> GainTable:
    """Normalize peak energies against the 0 deg measurement: ``factor = E(0) / E(theta)``."""
    rows = sorted((float(e), float(p)) for e, p in measurements)
    elevations = [e for e, _ in rows]
    if len(set(elevations)) != len(elevations):
        raise ValueError("calibration elevations must be unique")
    if any(p <= 0 or not math.isfinite(p) for _, p in rows):
        raise ValueError("calibration energies must be positive and finite")
    ref = [p for e, p in rows if e == 0.0]
    if not ref:
        raise ValueError("calibration needs a 0 deg measurement")
    e0 = ref[0]
    entries = tuple((e, 1.0 if e == 0.0 else e0 / p) for e, p in rows)
    return GainTable(entries, reference_range)


def apply_gain(image: AcousticImage, table: GainTable, theta_c: float) -> AcousticImage:
    return image.scaled(table.factor_at(theta_c))


def run_calibration_sweep(
    rig: Rig,
    angles: Sequence[float],
    reference_range: float = DEFAULT_REFERENCE_RANGE,
    noise_sigma: float = 0.0,
    seed: int = 0,
    neighborhood: int = 2,
) -> list[tuple[float, float]]:
    """Simulated pan-tilt calibration against a reflector at ``reference_range``.

    The reflector stays on the world horizontal axis while the head is pitched
    to each angle; the head is steered back with the bank (``theta_c`` nearest
    ``-angle``) and the largest envelope within ``neighborhood`` range bins of
    the reflector is recorded. Returns ``(theta_c, peak)`` pairs so the table
    is keyed by steering elevation.
    """
    if not any(a == 0 for a in angles):
        raise ValueError("calibration angles must include 0")
    scene = Scene((Reflector.at(reference_range),), noise_sigma, rig.bank.speed_of_sound)
    max_range = reference_range + 0.3
    out = []
    for k, angle in enumerate(angles):
        theta_c, delays = select_steering(rig.bank, angle)
        image = rig.image(rig.frame(scene, angle, seed + k), delays, max_range)
        row = int(np.argmin(np.abs(image.range_axis - reference_range)))
        lo, hi = max(0, row - neighborhood), min(image.range_axis.size, row + neighborhood + 1)
        out.append((theta_c, float(image.energy[lo:hi].max())))
    return out


def read_gain_table(path: str | Path, reference_range: float = DEFAULT_REFERENCE_RANGE) -> GainTable:
    entries = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 2:
                raise ValueError(f"{path}:{lineno}: expected elevation_deg,factor")
            entries.append((float(fields[0]), float(fields[1])))
    return GainTable(tuple(entries), reference_range)


def write_gain_table(table: GainTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("# elevation_deg,factor\n")
        for e, f in table.entries:
            handle.write(f"{e!r},{f!r}\n")
