"""Array geometry, direction conventions and emitter directivity.

Sensor frame: +x is the boresight, +y points left, +z points up. Azimuth is
measured from +x toward +y, elevation from the x-y plane toward +z. All public
angles are in degrees.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml
from scipy.special import j1

Vec3 = np.ndarray

DEFAULT_MIC_COUNT = 32
DEFAULT_DISC_RADIUS_M = 0.040
DEFAULT_LAYOUT_SEED = 2024


def direction_unit_vector(azimuth: float, elevation: float) -> Vec3:
    """Unit vector for a direction given in sensor-frame degrees.

    (0, 0) is the boresight (+x); positive elevation tilts toward +z and
    positive azimuth toward +y.
    """
    if not (-180.0 <= azimuth <= 180.0):
        raise ValueError(f"azimuth {azimuth} outside [-180, 180]")
    if not (-90.0 <= elevation <= 90.0):
        raise ValueError(f"elevation {elevation} outside [-90, 90]")
    az = math.radians(azimuth)
    el = math.radians(elevation)
    return np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])


def rotation_matrix_y(angle: float) -> np.ndarray:
    """Right-handed rotation matrix about +y (degrees)."""
    a = math.radians(angle)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotate_about_y(v: Vec3, angle: float) -> Vec3:
    """Rotate ``v`` (or an N x 3 stack of vectors) about the sensor y-axis.

    Right-handed: a positive angle turns +x toward -z, so
    ``rotate_about_y((1, 0, 0), 90) == (0, 0, -1)``. A sensor whose boresight
    is tilted *up* by ``t`` degrees is therefore rotated by ``-t``.
    """
    v = np.asarray(v, dtype=float)
    return v @ rotation_matrix_y(angle).T


def tilt_to_world(v: Vec3, tilt: float) -> Vec3:
    """Map sensor-frame vectors to the world frame for a sensor pitched up by ``tilt``."""
    return rotate_about_y(v, -tilt)


def world_to_tilt(v: Vec3, tilt: float) -> Vec3:
    """Inverse of :func:`tilt_to_world`."""
    return rotate_about_y(v, tilt)


@dataclass(frozen=True)
class MicArray:
    """Microphone positions and emitter location in the sensor frame (meters)."""

    mic_positions: np.ndarray
    emitter_position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        pos = np.array(self.mic_positions, dtype=float, copy=True).reshape(-1, 3)
        emitter = np.array(self.emitter_position, dtype=float, copy=True).reshape(3)
        if pos.shape[0] < 1:
            raise ValueError("array needs at least one microphone")
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(emitter)):
            raise ValueError("array positions must be finite")
        if np.unique(pos, axis=0).shape[0] != pos.shape[0]:
            raise ValueError("two microphones share an identical position")
        pos.setflags(write=False)
        emitter.setflags(write=False)
        object.__setattr__(self, "mic_positions", pos)
        object.__setattr__(self, "emitter_position", emitter)

    @property
    def num_mics(self) -> int:
        return int(self.mic_positions.shape[0])

    def digest(self) -> str:
        """Stable hash of the geometry, used to validate cached steering banks."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.mic_positions, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.emitter_position, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def random_disc_layout(
    count: int = DEFAULT_MIC_COUNT,
    radius_m: float = DEFAULT_DISC_RADIUS_M,
    seed: int = DEFAULT_LAYOUT_SEED,
    min_spacing_m: float = 0.004,
    emitter_clearance_m: float = 0.008,
) -> MicArray:
    """Irregular planar array in the y-z plane, emitter at the disc center.

    Positions are drawn uniformly over the annulus between the emitter
    clearance and ``radius_m`` by rejection sampling, so the layout is a pure
    function of the arguments.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if radius_m <= emitter_clearance_m:
        raise ValueError("radius_m must exceed the emitter clearance")
    rng = np.random.default_rng(seed)
    points: list[tuple[float, float]] = []
    attempts = 0
    while len(points) < count:
        attempts += 1
        if attempts > 200_000:
            raise ValueError("cannot place microphones with the requested spacing")
        y, z = rng.uniform(-radius_m, radius_m, size=2)
        r = math.hypot(y, z)
        if r > radius_m or r < emitter_clearance_m:
            continue
        if any(math.hypot(y - py, z - pz) < min_spacing_m for py, pz in points):
            continue
        points.append((float(y), float(z)))
    positions = np.array([[0.0, y, z] for y, z in points])
    return MicArray(positions, np.zeros(3))


def array_from_config(cfg: dict[str, Any]) -> MicArray:
    """Build an array from a parsed config mapping.

    Either ``positions`` (list of xyz triples in meters) or
    ``layout: random-disc`` with optional ``seed``, ``count``, ``radius_m``.
    """
    emitter = cfg.get("emitter_position", [0.0, 0.0, 0.0])
    if "positions" in cfg:
        return MicArray(np.asarray(cfg["positions"], dtype=float), np.asarray(emitter, dtype=float))
    layout = str(cfg.get("layout", "random-disc"))
    if layout != "random-disc":
        raise ValueError(f"unsupported array layout: {layout}")
    arr = random_disc_layout(
        count=int(cfg.get("count", DEFAULT_MIC_COUNT)),
        radius_m=float(cfg.get("radius_m", DEFAULT_DISC_RADIUS_M)),
        seed=int(cfg.get("seed", DEFAULT_LAYOUT_SEED)),
    )
    return MicArray(arr.mic_positions, np.asarray(emitter, dtype=float))


def load_array(path: str | Path) -> MicArray:
    with open(path, "r", encoding="utf-8") as handle:
        cfg = yaml.safe_load(handle) or {}
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: array config must be a mapping")
    return array_from_config(cfg)


def save_array(array: MicArray, path: str | Path) -> None:
    doc = {
        "positions": array.mic_positions.tolist(),
        "emitter_position": array.emitter_position.tolist(),
    }
    with open(path, "w", encoding="utf-8") as handle:
        yaml.safe_dump(doc, handle, sort_keys=False)


@dataclass(frozen=True)
class DirectivityModel:
    """Emitter directivity. ``circular_piston`` is the baffled-piston pattern."""

    model_kind: Literal["omnidirectional", "circular_piston"] = "circular_piston"
    aperture_radius: float = 0.005
    reference_frequency: float = 40_000.0
    speed_of_sound: float = 343.0

    def __post_init__(self) -> None:
        if self.model_kind not in ("omnidirectional", "circular_piston"):
            raise ValueError(f"unknown directivity model: {self.model_kind}")
        if self.aperture_radius < 0:
            raise ValueError("aperture_radius must be non-negative")
        if self.reference_frequency <= 0 or self.speed_of_sound <= 0:
            raise ValueError("reference_frequency and speed_of_sound must be positive")

    @property
    def ka(self) -> float:
        return 2.0 * math.pi * self.reference_frequency / self.speed_of_sound * self.aperture_radius


OMNI = DirectivityModel("omnidirectional")


def directivity_gain(model: DirectivityModel, off_axis_angle):
    """Amplitude gain of the emitter at ``off_axis_angle`` degrees.

    Accepts scalars or arrays. Only ``|angle|`` matters. The piston pattern is
    ``|2 J1(x) / x|`` with ``x = k a sin(angle)``.
    """
    if model.aperture_radius < 0:
        raise ValueError("aperture_radius must be non-negative")
    angle = np.abs(np.asarray(off_axis_angle, dtype=float))
    if np.any(angle > 180.0 + 1e-9):
        raise ValueError("off-axis angle outside [0, 180]")
    if model.model_kind == "omnidirectional":
        out = np.ones_like(angle)
    else:
        x = model.ka * np.sin(np.radians(angle))
        safe = np.where(np.abs(x) < 1e-12, 1.0, x)
        out = np.where(np.abs(x) < 1e-12, 1.0, np.abs(2.0 * j1(safe) / safe))
        out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def off_axis_angle(axis: Vec3, direction: Vec3) -> np.ndarray:
    """Angle in degrees between ``axis`` and each row of ``direction``."""
    d = np.atleast_2d(np.asarray(direction, dtype=float))
    a = np.asarray(axis, dtype=float)
    cosang = d @ a / (np.linalg.norm(d, axis=1) * np.linalg.norm(a))
    return np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
