"""Gradient-descent AHRS fusion (Madgwick) and elevation tilt extraction.

Quaternions are ``(w, x, y, z)`` and map sensor-frame vectors to the world
frame (world +z up). The elevation tilt ``theta_i`` is positive when the
sensor boresight points above the horizontal plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import diagnostics

DEFAULT_BETA = 0.1
DEFAULT_IMU_RATE = 100.0
GRAVITY = 9.81

IDENTITY = (1.0, 0.0, 0.0, 0.0)


class InvalidImuSample(ValueError):
    """Raised for samples carrying non-finite values."""


@dataclass(frozen=True)
class ImuSample:
    gyro: tuple[float, float, float]
    accel: tuple[float, float, float]
    mag: tuple[float, float, float] | None = None
    timestamp: float = 0.0

    def is_finite(self) -> bool:
        values = list(self.gyro) + list(self.accel) + list(self.mag or ()) + [self.timestamp]
        return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class AttitudeEstimate:
    orientation: tuple[float, float, float, float] = IDENTITY
    theta_i: float = 0.0
    timestamp: float = 0.0

    @classmethod
    def initial(cls, timestamp: float = 0.0) -> "AttitudeEstimate":
        return cls(IDENTITY, 0.0, timestamp)


def quat_multiply(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis: Sequence[float], angle_deg: float) -> np.ndarray:
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    half = math.radians(angle_deg) / 2.0
    return np.concatenate([[math.cos(half)], math.sin(half) * a])


def quat_for_elevation(theta_deg: float) -> np.ndarray:
    """Orientation of a sensor whose boresight is pitched up by ``theta_deg``."""
    return quat_from_axis_angle((0.0, 1.0, 0.0), -theta_deg)


def quat_rotate(q: np.ndarray, v: Sequence[float]) -> np.ndarray:
    """Rotate sensor-frame ``v`` into the world frame."""
    qv = np.concatenate([[0.0], np.asarray(v, dtype=float)])
    return quat_multiply(quat_multiply(q, qv), quat_conjugate(q))[1:]


def elevation_from_orientation(orientation: Sequence[float]) -> float:
    """Elevation of the rotated boresight above the world horizontal plane, degrees."""
    w, x, y, z = (float(c) for c in orientation)
    norm = math.sqrt(w * w + x * x + y * y + z * z)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"orientation is not a unit quaternion (norm {norm})")
    # world-z component of R(q) @ (1, 0, 0)
    sin_el = 2.0 * (x * z - w * y)
    return math.degrees(math.asin(max(-1.0, min(1.0, sin_el))))


def _gravity_objective(q: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q0, q1, q2, q3 = q
    f = np.array(
        [
            2.0 * (q1 * q3 - q0 * q2) - a[0],
            2.0 * (q0 * q1 + q2 * q3) - a[1],
            2.0 * (0.5 - q1 * q1 - q2 * q2) - a[2],
        ]
    )
    jac = np.array(
        [
            [-2.0 * q2, 2.0 * q3, -2.0 * q0, 2.0 * q1],
            [2.0 * q1, 2.0 * q0, 2.0 * q3, 2.0 * q2],
            [0.0, -4.0 * q1, -4.0 * q2, 0.0],
        ]
    )
    return f, jac


def _field_objective(q: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q0, q1, q2, q3 = q
    # earth-frame field direction, with its horizontal part folded onto x
    h = quat_rotate(q, m)
    bx = math.hypot(h[0], h[1])
    bz = h[2]
    f = np.array(
        [
            2.0 * bx * (0.5 - q2 * q2 - q3 * q3) + 2.0 * bz * (q1 * q3 - q0 * q2) - m[0],
            2.0 * bx * (q1 * q2 - q0 * q3) + 2.0 * bz * (q0 * q1 + q2 * q3) - m[1],
            2.0 * bx * (q0 * q2 + q1 * q3) + 2.0 * bz * (0.5 - q1 * q1 - q2 * q2) - m[2],
        ]
    )
    jac = np.array(
        [
            [-2.0 * bz * q2, 2.0 * bz * q3, -4.0 * bx * q2 - 2.0 * bz * q0, -4.0 * bx * q3 + 2.0 * bz * q1],
            [-2.0 * bx * q3 + 2.0 * bz * q1, 2.0 * bx * q2 + 2.0 * bz * q0, 2.0 * bx * q1 + 2.0 * bz * q3, -2.0 * bx * q0 + 2.0 * bz * q2],
            [2.0 * bx * q2, 2.0 * bx * q3 - 4.0 * bz * q1, 2.0 * bx * q0 - 4.0 * bz * q2, 2.0 * bx * q1],
        ]
    )
    return f, jac


def ahrs_update(state: AttitudeEstimate, sample: ImuSample, beta: float = DEFAULT_BETA) -> AttitudeEstimate:
    """Advance ``state`` by one IMU sample.

    The gyro rate is integrated over the interval since ``state.timestamp``
    and a normalized gradient-descent step of size ``beta`` pulls the
    orientation toward the measured gravity (and field, when a magnetometer
    reading is present). A zero accelerometer vector skips the correction.

    Raises:
        InvalidImuSample: the sample holds NaN or inf; ``state`` is untouched.
        ValueError: the sample is older than the state.
    """
    if not sample.is_finite():
        raise InvalidImuSample(f"non-finite IMU sample at t={sample.timestamp}")
    dt = sample.timestamp - state.timestamp
    if dt < 0:
        raise ValueError(f"IMU sample at t={sample.timestamp} precedes state t={state.timestamp}")
    if dt == 0:
        return state

    q = np.asarray(state.orientation, dtype=float)
    omega = np.concatenate([[0.0], np.asarray(sample.gyro, dtype=float)])
    q_dot = 0.5 * quat_multiply(q, omega)

    a = np.asarray(sample.accel, dtype=float)
    a_norm = np.linalg.norm(a)
    if a_norm > 0.0:
        f, jac = _gravity_objective(q, a / a_norm)
        step = jac.T @ f
        if sample.mag is not None:
            m = np.asarray(sample.mag, dtype=float)
            m_norm = np.linalg.norm(m)
            if m_norm > 0.0:
                fb, jb = _field_objective(q, m / m_norm)
                step = step + jb.T @ fb
        s_norm = np.linalg.norm(step)
        if s_norm > 0.0:
            q_dot = q_dot - beta * step / s_norm

    q = q + q_dot * dt
    q = q / np.linalg.norm(q)
    orientation = tuple(float(c) for c in q)
    return AttitudeEstimate(orientation, elevation_from_orientation(orientation), sample.timestamp)


def startup_gain(elapsed: float, beta: float, warmup: float = 1.0, initial_gain: float = 2.0) -> float:
    """Filter gain ramping linearly from ``initial_gain`` down to ``beta`` over ``warmup`` seconds."""
    if warmup <= 0 or elapsed >= warmup or initial_gain <= beta:
        return beta
    return initial_gain + (beta - initial_gain) * (elapsed / warmup)


def replay_imu(
    stream: Iterable[ImuSample],
    beta: float = DEFAULT_BETA,
    warmup: float = 1.0,
    initial_gain: float = 2.0,
) -> list[AttitudeEstimate]:
    """Fuse a recorded stream from the identity orientation.

    Returns one estimate per accepted sample; non-finite samples are dropped
    and counted under ``imu_rejected``. During the first ``warmup`` seconds
    the gain starts at ``initial_gain`` so large static tilts are acquired
    quickly; pass ``warmup=0`` for a constant gain.
    """
    samples = list(stream)
    if not samples:
        raise ValueError("IMU stream is empty")
    t0 = samples[0].timestamp
    state = AttitudeEstimate.initial(t0)
    out: list[AttitudeEstimate] = []
    for sample in samples:
        gain = startup_gain(sample.timestamp - t0, beta, warmup, initial_gain)
        try:
            state = ahrs_update(state, sample, gain)
        except InvalidImuSample as exc:
            diagnostics.warn("imu_rejected", str(exc))
            continue
        out.append(state)
    return out


class AttitudeTracker:
    """Single-writer fusion state with latest-snapshot reads.

    ``advance_to`` consumes stream samples up to a timestamp; ``latest``
    returns the most recent immutable estimate.
    """

    def __init__(self, stream: Sequence[ImuSample], beta: float = DEFAULT_BETA,
                 warmup: float = 1.0, initial_gain: float = 2.0) -> None:
        if not stream:
            raise ValueError("IMU stream is empty")
        self._stream = list(stream)
        self._beta = beta
        self._warmup = warmup
        self._initial_gain = initial_gain
        self._t0 = self._stream[0].timestamp
        self._index = 0
        self._latest = AttitudeEstimate.initial(self._t0)

    def advance_to(self, timestamp: float) -> AttitudeEstimate:
        while self._index < len(self._stream) and self._stream[self._index].timestamp <= timestamp:
            sample = self._stream[self._index]
            self._index += 1
            gain = startup_gain(sample.timestamp - self._t0, self._beta, self._warmup, self._initial_gain)
            try:
                self._latest = ahrs_update(self._latest, sample, gain)
            except InvalidImuSample as exc:
                diagnostics.warn("imu_rejected", str(exc))
        return self._latest

    @property
    def latest(self) -> AttitudeEstimate:
        return self._latest


def read_imu_stream(path: str | Path) -> list[ImuSample]:
    """Parse ``timestamp_s,gx,gy,gz,ax,ay,az[,mx,my,mz]`` lines; ``#`` starts a comment."""
    samples: list[ImuSample] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = [float(v) for v in line.split(",")]
            if len(fields) not in (7, 10):
                raise ValueError(f"{path}:{lineno}: expected 7 or 10 fields, got {len(fields)}")
            mag = tuple(fields[7:10]) if len(fields) == 10 else None
            if samples and fields[0] <= samples[-1].timestamp:
                raise ValueError(f"{path}:{lineno}: timestamps must increase")
            samples.append(ImuSample(tuple(fields[1:4]), tuple(fields[4:7]), mag, fields[0]))
    return samples


def write_imu_stream(samples: Iterable[ImuSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("# timestamp_s,gx,gy,gz,ax,ay,az[,mx,my,mz]\n")
        for s in samples:
            values = [s.timestamp, *s.gyro, *s.accel, *(s.mag or ())]
            handle.write(",".join(repr(float(v)) for v in values) + "\n")
