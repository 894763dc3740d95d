"""Point-reflector sonar and IMU simulation.

The sensor sits at the world origin and is pitched about its y-axis; world
+z is up. Echoes are single-bounce, spread as ``1 / (r_tx * r_rx)``, and
scaled by the emitter directivity at the reflector's off-axis angle. Only
the emitter is directional; microphones are omnidirectional.

Scene files are YAML::

    speed_of_sound: 343.0
    noise_sigma: 0.0
    absorption_db_per_m: 0.0      # optional
    reflectors:
      - [x, y, z, reflectivity]   # meters, world frame

Tilt profiles are ``timestamp_s,theta_deg`` text lines (``#`` comments).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import diagnostics
from .ahrs import GRAVITY, ImuSample
from .dsp import DEFAULT_SAMPLE_RATE, EmissionSpec, RawFrame, chirp_waveform
from .geometry import DirectivityModel, MicArray, directivity_gain, off_axis_angle, world_to_tilt

MIN_REFLECTOR_RANGE = 0.1
# magnetic field direction used for synthetic magnetometer readings (60 deg dip)
EARTH_FIELD = (math.cos(math.radians(60.0)), 0.0, -math.sin(math.radians(60.0)))


@dataclass(frozen=True)
class Reflector:
    position: tuple[float, float, float]
    reflectivity: float = 1.0

    def __post_init__(self) -> None:
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3:
            raise ValueError("reflector position must be an xyz triple")
        object.__setattr__(self, "position", pos)
        if self.reflectivity <= 0:
            raise ValueError("reflectivity must be positive")
        if math.sqrt(sum(v * v for v in pos)) < MIN_REFLECTOR_RANGE:
            raise ValueError(f"reflector closer than {MIN_REFLECTOR_RANGE} m")

    @classmethod
    def at(cls, rng: float, azimuth: float = 0.0, elevation: float = 0.0, reflectivity: float = 1.0) -> "Reflector":
        """Reflector at world range/azimuth/elevation (meters, degrees)."""
        az, el = math.radians(azimuth), math.radians(elevation)
        return cls(
            (rng * math.cos(el) * math.cos(az), rng * math.cos(el) * math.sin(az), rng * math.sin(el)),
            reflectivity,
        )


@dataclass(frozen=True)
class Scene:
    reflectors: tuple[Reflector, ...] = ()
    noise_sigma: float = 0.0
    speed_of_sound: float = 343.0
    absorption_db_per_m: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "reflectors", tuple(self.reflectors))
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.speed_of_sound <= 0:
            raise ValueError("speed_of_sound must be positive")

    def max_range(self) -> float:
        if not self.reflectors:
            return 0.0
        return max(math.sqrt(sum(v * v for v in r.position)) for r in self.reflectors)


def default_scene(noise_sigma: float = 0.0) -> Scene:
    """Cluttered-corridor stand-in: six reflectors on the horizontal plane, 1.2-3.8 m, within +-25 deg."""
    reflectors = (
        Reflector.at(1.2, -25.0, 0.0, 0.7),
        Reflector.at(1.8, 10.0, 0.0, 1.0),
        Reflector.at(2.4, -7.5, 0.0, 0.9),
        Reflector.at(2.9, 20.0, 0.0, 1.2),
        Reflector.at(3.4, -15.0, 0.0, 1.5),
        Reflector.at(3.8, 25.0, 0.0, 1.3),
    )
    return Scene(reflectors, noise_sigma)


def boresight_scene(rng: float = 2.0, noise_sigma: float = 0.0) -> Scene:
    return Scene((Reflector.at(rng),), noise_sigma)


def load_scene(path: str | Path) -> Scene:
    with open(path, "r", encoding="utf-8") as handle:
        doc = yaml.safe_load(handle) or {}
    reflectors = []
    for item in doc.get("reflectors", []):
        if len(item) != 4:
            raise ValueError(f"{path}: reflector entries must be [x, y, z, reflectivity]")
        reflectors.append(Reflector(tuple(item[:3]), float(item[3])))
    return Scene(
        tuple(reflectors),
        float(doc.get("noise_sigma", 0.0)),
        float(doc.get("speed_of_sound", 343.0)),
        float(doc.get("absorption_db_per_m", 0.0)),
    )


def save_scene(scene: Scene, path: str | Path) -> None:
    doc = {
        "speed_of_sound": scene.speed_of_sound,
        "noise_sigma": scene.noise_sigma,
        "absorption_db_per_m": scene.absorption_db_per_m,
        "reflectors": [[*r.position, r.reflectivity] for r in scene.reflectors],
    }
    with open(path, "w", encoding="utf-8") as handle:
        yaml.safe_dump(doc, handle, sort_keys=False)


def required_duration(scene: Scene, emission: EmissionSpec, margin: float = 0.001) -> float:
    """Frame length covering the farthest echo plus the chirp and a margin."""
    return 2.0 * (scene.max_range() + 0.1) / scene.speed_of_sound + emission.duration + margin


def synthesize_frame(
    scene: Scene,
    array: MicArray,
    emission: EmissionSpec,
    directivity: DirectivityModel,
    tilt: float = 0.0,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    duration: float | None = None,
    seed: int = 0,
    timestamp: float = 0.0,
) -> RawFrame:
    """Render one measurement for a sensor pitched up by ``tilt`` degrees.

    Echo delays use exact emitter -> reflector -> microphone path lengths and
    the chirp is evaluated analytically at the fractional delay, so there is
    no interpolation error. Reflectors behind the array are skipped and
    counted under ``reflector_behind``.
    """
    emission.validate(sample_rate)
    c = scene.speed_of_sound
    if duration is None:
        duration = required_duration(scene, emission)
    num_samples = int(round(duration * sample_rate))
    if num_samples < 1:
        raise ValueError("frame duration too short")
    t = np.arange(num_samples) / sample_rate
    channels = np.zeros((array.num_mics, num_samples))
    chirp_len = int(math.ceil(emission.duration * sample_rate)) + 1

    for refl in scene.reflectors:
        q = world_to_tilt(np.asarray(refl.position), tilt)
        to_refl = q - array.emitter_position
        if to_refl[0] <= 0.0:
            diagnostics.warn("reflector_behind", f"reflector at {refl.position} is behind the array")
            continue
        r_tx = float(np.linalg.norm(to_refl))
        angle = off_axis_angle(np.array([1.0, 0.0, 0.0]), to_refl)[0]
        gain = directivity_gain(directivity, angle)
        r_rx = np.linalg.norm(q[None, :] - array.mic_positions, axis=1)
        delays = (r_tx + r_rx) / c
        if np.max(delays) + emission.duration > duration:
            raise ValueError(f"frame duration {duration} s does not cover the echo from {refl.position}")
        amps = refl.reflectivity * gain / (r_tx * r_rx)
        if scene.absorption_db_per_m:
            amps = amps * 10.0 ** (-scene.absorption_db_per_m * (r_tx + r_rx) / 20.0)
        for m in range(array.num_mics):
            start = int(math.ceil(delays[m] * sample_rate))
            stop = min(start + chirp_len, num_samples)
            seg = slice(start, stop)
            channels[m, seg] += amps[m] * chirp_waveform(emission, t[seg] - delays[m])

    if scene.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        channels += rng.normal(0.0, scene.noise_sigma, size=channels.shape)
    return RawFrame(channels, sample_rate, timestamp)


@dataclass(frozen=True)
class TiltProfile:
    """Piecewise-linear tilt over time (seconds, degrees)."""

    samples: tuple[tuple[float, float], ...] = field(default=((0.0, 0.0),))

    def __post_init__(self) -> None:
        pts = tuple((float(t), float(th)) for t, th in self.samples)
        if not pts:
            raise ValueError("tilt profile is empty")
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise ValueError("tilt profile timestamps must increase")
        object.__setattr__(self, "samples", pts)

    @classmethod
    def constant(cls, theta: float, duration: float = 2.0) -> "TiltProfile":
        return cls(((0.0, theta), (duration, theta)))

    @property
    def start(self) -> float:
        return self.samples[0][0]

    @property
    def end(self) -> float:
        return self.samples[-1][0]

    def theta_at(self, t):
        times = [p[0] for p in self.samples]
        thetas = [p[1] for p in self.samples]
        return np.interp(t, times, thetas)


def load_tilt_profile(path: str | Path) -> TiltProfile:
    pts = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 2:
                raise ValueError(f"{path}:{lineno}: expected timestamp_s,theta_deg")
            pts.append((float(fields[0]), float(fields[1])))
    return TiltProfile(tuple(pts))


def save_tilt_profile(profile: TiltProfile, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("# timestamp_s,theta_deg\n")
        for t, th in profile.samples:
            handle.write(f"{t!r},{th!r}\n")


def synthesize_imu(
    profile: TiltProfile,
    rate: float = 100.0,
    gyro_noise: float = 0.0,
    accel_noise: float = 0.0,
    seed: int = 0,
    with_mag: bool = False,
    start: float | None = None,
    end: float | None = None,
) -> list[ImuSample]:
    """IMU readings for a sensor following ``profile``.

    The accelerometer reads specific force, i.e. world-up gravity expressed in
    the sensor frame: ``g * (sin theta, 0, cos theta)``. Pitching up is a
    negative rotation about +y, so the gyro y rate is ``-d(theta)/dt``.
    ``start``/``end`` default to the profile span; outside it the tilt holds
    its end values.
    """
    if rate <= 0:
        raise ValueError("IMU rate must be positive")
    t_start = profile.start if start is None else start
    t_end = profile.end if end is None else end
    n = int(math.floor((t_end - t_start) * rate + 1e-9)) + 1
    times = t_start + np.arange(n) / rate
    theta = np.asarray(profile.theta_at(times), dtype=float)
    if n > 1:
        rate_deg = np.gradient(theta, times)
    else:
        rate_deg = np.zeros(1)
    rng = np.random.default_rng(seed)
    gyro = np.zeros((n, 3))
    gyro[:, 1] = -np.radians(rate_deg)
    th = np.radians(theta)
    accel = GRAVITY * np.stack([np.sin(th), np.zeros(n), np.cos(th)], axis=1)
    if gyro_noise > 0:
        gyro = gyro + rng.normal(0.0, gyro_noise, size=gyro.shape)
    if accel_noise > 0:
        accel = accel + rng.normal(0.0, accel_noise, size=accel.shape)
    samples = []
    for k in range(n):
        mag = None
        if with_mag:
            mag = tuple(float(v) for v in world_to_tilt(np.asarray(EARTH_FIELD), float(theta[k])))
        samples.append(
            ImuSample(
                tuple(float(v) for v in gyro[k]),
                tuple(float(v) for v in accel[k]),
                mag,
                float(times[k]),
            )
        )
    return samples


def frame_times(profile: TiltProfile, frame_rate: float) -> np.ndarray:
    """Frame epochs over the profile at ``frame_rate`` hertz."""
    if frame_rate <= 0:
        raise ValueError("frame rate must be positive")
    n = int(math.floor((profile.end - profile.start) * frame_rate + 1e-9)) + 1
    return profile.start + np.arange(n) / frame_rate


def mic_echo_delays(scene: Scene, array: MicArray, tilt: float) -> np.ndarray:
    """Two-way delays (seconds), reflectors x mics; used as an independent check."""
    out = np.zeros((len(scene.reflectors), array.num_mics))
    for i, refl in enumerate(scene.reflectors):
        q = world_to_tilt(np.asarray(refl.position), tilt)
        for m, p in enumerate(array.mic_positions):
            out[i, m] = (math.dist(q, array.emitter_position) + math.dist(q, p)) / scene.speed_of_sound
    return out


def rotated(scene: Scene, angle: float) -> Scene:
    """Scene pitched up by ``angle`` degrees about the world y-axis."""
    refl = tuple(
        Reflector(tuple(world_to_tilt(np.asarray(r.position), -angle)), r.reflectivity)
        for r in scene.reflectors
    )
    return Scene(refl, scene.noise_sigma, scene.speed_of_sound, scene.absorption_db_per_m)


def sweep_seeds(seed: int, count: int) -> Sequence[int]:
    """Per-frame seeds derived from a root seed (``seed + index``)."""
    return [seed + k for k in range(count)]
