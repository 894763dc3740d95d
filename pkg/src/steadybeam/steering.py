"""Precomputed delay-and-sum steering matrices and tilt-driven selection.

The scan at elevation ``theta_c`` covers the sensor-frame directions
``(azimuth, theta_c)`` for every azimuth in the grid. A sensor pitched up by
``theta_i`` sees the horizontal plane ahead at elevation ``-theta_i``, so
scanning at ``theta_c = -theta_i`` keeps the scan level.

Bank cache file layout::

    line 1 (ASCII): SBBANK <version> <json header>\\n
    body, for each elevation in ascending order:
        delays   num_mics x num_azimuths little-endian float32, row-major
        offsets  num_azimuths little-endian float32

The JSON header carries the array digest, grid parameters, azimuths and
speed of sound; loading rejects a file built for a different array.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diagnostics
from .geometry import MicArray, direction_unit_vector

DEFAULT_SPEED_OF_SOUND = 343.0
DEFAULT_THETA_C_MIN = -30.0
DEFAULT_THETA_C_MAX = 30.0
DEFAULT_RESOLUTION = 1.0
BYTES_PER_ENTRY = 4

BANK_MAGIC = "SBBANK"
BANK_VERSION = 1


def default_azimuths() -> np.ndarray:
    return np.arange(-90.0, 91.0, 1.0)


@dataclass(frozen=True)
class DirectionGrid:
    azimuths: np.ndarray
    elevation: float = 0.0

    def __post_init__(self) -> None:
        az = np.array(self.azimuths, dtype=float, copy=True).reshape(-1)
        if az.size == 0:
            raise ValueError("azimuth grid is empty")
        if np.any(np.diff(az) <= 0):
            raise ValueError("azimuths must be strictly increasing")
        if az[0] < -90.0 or az[-1] > 90.0:
            raise ValueError("azimuths must lie within [-90, 90]")
        az.setflags(write=False)
        object.__setattr__(self, "azimuths", az)

    def unit_vectors(self) -> np.ndarray:
        """Sensor-frame look directions, one row per azimuth."""
        return np.array([direction_unit_vector(a, self.elevation) for a in self.azimuths])


@dataclass(frozen=True)
class DelayMatrix:
    """Per-mic, per-direction delays in seconds.

    ``delays`` is shifted per column so its minimum is zero; ``offsets``
    holds the removed shift, so ``delays + offsets`` is the arrival time
    relative to a wave passing the array origin.
    """

    delays: np.ndarray
    offsets: np.ndarray
    azimuths: np.ndarray
    elevation: float
    speed_of_sound: float

    def __post_init__(self) -> None:
        for name in ("delays", "offsets", "azimuths"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.delays.ndim != 2 or self.delays.shape[1] != self.azimuths.size:
            raise ValueError("delay matrix columns must match the azimuth grid")
        if self.offsets.shape != (self.azimuths.size,):
            raise ValueError("one offset per direction is required")

    @property
    def num_mics(self) -> int:
        return int(self.delays.shape[0])

    def sample_shifts(self, sample_rate: float) -> np.ndarray:
        """Nearest-sample absolute arrival offsets, num_mics x num_directions."""
        return np.rint((self.delays + self.offsets[None, :]) * sample_rate).astype(np.int64)


def compute_delay_matrix(array: MicArray, grid: DirectionGrid, c: float = DEFAULT_SPEED_OF_SOUND) -> DelayMatrix:
    """Far-field delays ``-(p_m . u_d) / c``, normalized per column to a zero minimum."""
    if c <= 0:
        raise ValueError("speed of sound must be positive")
    u = grid.unit_vectors()
    raw = -(array.mic_positions @ u.T) / c
    offsets = raw.min(axis=0)
    delays = raw - offsets[None, :]
    return DelayMatrix(delays, offsets, grid.azimuths, float(grid.elevation), float(c))


@dataclass(frozen=True)
class SteeringBank:
    matrices: tuple[DelayMatrix, ...]
    theta_c_min: float
    theta_c_max: float
    resolution: float
    array_digest: str = ""
    elevations: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.matrices:
            raise ValueError("steering bank is empty")
        elev = np.array([m.elevation for m in self.matrices])
        elev.setflags(write=False)
        object.__setattr__(self, "matrices", tuple(self.matrices))
        object.__setattr__(self, "elevations", elev)

    def __len__(self) -> int:
        return len(self.matrices)

    @property
    def azimuths(self) -> np.ndarray:
        return self.matrices[0].azimuths

    @property
    def speed_of_sound(self) -> float:
        return self.matrices[0].speed_of_sound

    def at(self, theta_c: float) -> DelayMatrix:
        """Matrix for an exact grid elevation."""
        k = int(round((theta_c - self.theta_c_min) / self.resolution)) if len(self) > 1 else 0
        if not (0 <= k < len(self)) or abs(self.matrices[k].elevation - theta_c) > 1e-9:
            raise KeyError(f"{theta_c} is not a bank elevation")
        return self.matrices[k]


def grid_count(theta_c_min: float, theta_c_max: float, resolution: float) -> int:
    if not (math.isfinite(theta_c_min) and math.isfinite(theta_c_max)):
        raise ValueError("bank limits must be finite")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if not theta_c_min < theta_c_max:
        raise ValueError(f"theta_c_min ({theta_c_min}) must be below theta_c_max ({theta_c_max})")
    steps = (theta_c_max - theta_c_min) / resolution
    if abs(steps - round(steps)) > 1e-9:
        raise ValueError(f"resolution {resolution} does not divide [{theta_c_min}, {theta_c_max}]")
    return int(round(steps)) + 1


def build_bank(
    array: MicArray,
    azimuths: Sequence[float] | None = None,
    theta_c_min: float = DEFAULT_THETA_C_MIN,
    theta_c_max: float = DEFAULT_THETA_C_MAX,
    resolution: float = DEFAULT_RESOLUTION,
    c: float = DEFAULT_SPEED_OF_SOUND,
) -> SteeringBank:
    n = grid_count(theta_c_min, theta_c_max, resolution)
    az = default_azimuths() if azimuths is None else np.asarray(azimuths, dtype=float)
    matrices = tuple(
        compute_delay_matrix(array, DirectionGrid(az, theta_c_min + k * resolution), c)
        for k in range(n)
    )
    return SteeringBank(matrices, float(theta_c_min), float(theta_c_max), float(resolution), array.digest())


def single_angle_bank(array: MicArray, theta_c: float = 0.0, azimuths: Sequence[float] | None = None,
                      c: float = DEFAULT_SPEED_OF_SOUND) -> SteeringBank:
    """Bank holding one matrix; selection always returns it."""
    az = default_azimuths() if azimuths is None else np.asarray(azimuths, dtype=float)
    m = compute_delay_matrix(array, DirectionGrid(az, theta_c), c)
    return SteeringBank((m,), float(theta_c), float(theta_c), 1.0, array.digest())


def select_steering(bank: SteeringBank, theta_i: float) -> tuple[float, DelayMatrix]:
    """Pick the bank matrix whose elevation is nearest ``-theta_i``.

    Targets outside the bank are clamped (counted as ``steering_clamped``).
    An exact midpoint between two grid angles goes to the one farther from
    zero. Constant time: index arithmetic only.
    """
    if not math.isfinite(theta_i):
        raise ValueError(f"tilt must be finite, got {theta_i}")
    n = len(bank.matrices)
    if n == 1:
        m = bank.matrices[0]
        return m.elevation, m
    target = -theta_i
    if target < bank.theta_c_min or target > bank.theta_c_max:
        diagnostics.warn("steering_clamped", f"tilt {theta_i} outside bank range")
        target = min(max(target, bank.theta_c_min), bank.theta_c_max)
    pos = (target - bank.theta_c_min) / bank.resolution
    lo = min(int(math.floor(pos)), n - 1)
    frac = pos - lo
    if abs(frac - 0.5) <= 1e-9:
        lo_angle = bank.theta_c_min + lo * bank.resolution
        k = lo + 1 if abs(lo_angle + bank.resolution) > abs(lo_angle) else lo
    else:
        k = lo + 1 if frac > 0.5 else lo
    k = min(max(k, 0), n - 1)
    m = bank.matrices[k]
    return m.elevation, m


def bank_memory_bytes(bank: SteeringBank, bytes_per_entry: int = BYTES_PER_ENTRY) -> int:
    return sum(int(m.delays.size) for m in bank.matrices) * bytes_per_entry


def save_bank(bank: SteeringBank, path: str | Path) -> None:
    header = {
        "array_digest": bank.array_digest,
        "theta_c_min": bank.theta_c_min,
        "theta_c_max": bank.theta_c_max,
        "resolution": bank.resolution,
        "speed_of_sound": bank.speed_of_sound,
        "num_mics": bank.matrices[0].num_mics,
        "azimuths": bank.azimuths.tolist(),
        "elevations": bank.elevations.tolist(),
    }
    with open(path, "wb") as handle:
        handle.write(f"{BANK_MAGIC} {BANK_VERSION} {json.dumps(header, sort_keys=True)}\n".encode("ascii"))
        for m in bank.matrices:
            handle.write(np.ascontiguousarray(m.delays, dtype="<f4").tobytes())
            handle.write(np.ascontiguousarray(m.offsets, dtype="<f4").tobytes())


def load_bank(path: str | Path, array: MicArray) -> SteeringBank:
    with open(path, "rb") as handle:
        first = handle.readline().decode("ascii")
        body = handle.read()
    magic, version, payload = first.split(" ", 2)
    if magic != BANK_MAGIC or int(version) != BANK_VERSION:
        raise ValueError(f"{path}: not a steering bank cache")
    header = json.loads(payload)
    if header["array_digest"] != array.digest():
        raise ValueError(f"{path}: bank was built for a different array geometry")
    num_mics = int(header["num_mics"])
    az = np.asarray(header["azimuths"], dtype=float)
    n_az = az.size
    per = (num_mics * n_az + n_az) * 4
    elevations = header["elevations"]
    if len(body) != per * len(elevations):
        raise ValueError(f"{path}: truncated bank cache")
    matrices = []
    for k, elev in enumerate(elevations):
        chunk = np.frombuffer(body, dtype="<f4", count=num_mics * n_az + n_az, offset=k * per)
        delays = chunk[: num_mics * n_az].reshape(num_mics, n_az).astype(float)
        offsets = chunk[num_mics * n_az :].astype(float)
        matrices.append(DelayMatrix(delays, offsets, az, float(elev), float(header["speed_of_sound"])))
    return SteeringBank(
        tuple(matrices),
        float(header["theta_c_min"]),
        float(header["theta_c_max"]),
        float(header["resolution"]),
        header["array_digest"],
    )
