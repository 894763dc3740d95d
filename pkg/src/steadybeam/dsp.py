"""Emission waveform, matched filtering and envelope extraction.

Also owns the raw frame container and its binary file format::

    line 1 (ASCII, '\\n' terminated):
        SBRAW <version> <num_mics> <num_samples> <sample_rate> <timestamp>
    body: num_mics * num_samples little-endian float32, channel-major
          (all samples of mic 0, then mic 1, ...)

Numbers in the header are decimal text; ``repr`` of floats is used so the
round trip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

RAW_MAGIC = "SBRAW"
RAW_VERSION = 1

DEFAULT_SAMPLE_RATE = 450_000.0


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        s = np.asarray(self.samples)
        if s.ndim != 1 or s.size < 1:
            raise ValueError("a signal needs at least one sample")
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True)
class EmissionSpec:
    """Linear FM sweep. Defaults: 80 kHz down to 20 kHz in 2 ms."""

    f_start: float = 80_000.0
    f_end: float = 20_000.0
    duration: float = 0.002
    amplitude: float = 1.0

    def validate(self, sample_rate: float) -> None:
        nyquist = sample_rate / 2.0
        for f in (self.f_start, self.f_end):
            if not (0.0 < f < nyquist):
                raise ValueError(f"sweep frequency {f} Hz outside (0, {nyquist}) Hz")
        if self.duration <= 0:
            raise ValueError("chirp duration must be positive")


def chirp_waveform(spec: EmissionSpec, t: np.ndarray) -> np.ndarray:
    """Evaluate the emitted sweep at arbitrary times ``t`` (seconds); zero outside the pulse."""
    t = np.asarray(t, dtype=float)
    rate = (spec.f_end - spec.f_start) / spec.duration
    phase = 2.0 * np.pi * (spec.f_start * t + 0.5 * rate * t * t)
    inside = (t >= 0.0) & (t < spec.duration)
    return np.where(inside, spec.amplitude * np.cos(phase), 0.0)


def generate_chirp(spec: EmissionSpec, sample_rate: float = DEFAULT_SAMPLE_RATE) -> Signal:
    spec.validate(sample_rate)
    n = max(1, int(round(spec.duration * sample_rate)))
    t = np.arange(n) / sample_rate
    return Signal(chirp_waveform(spec, t), sample_rate)


def matched_filter(recording: Signal, replica: Signal) -> Signal:
    """Cross-correlate ``recording`` with ``replica``.

    ``out[n] = sum_k recording[n + k] * replica[k]`` for ``n`` in
    ``[0, len(recording))``, so an echo starting at sample ``d`` peaks at
    ``d``. Computed with FFTs.
    """
    if recording.sample_rate != replica.sample_rate:
        raise ValueError(
            f"sample-rate mismatch: {recording.sample_rate} vs {replica.sample_rate}"
        )
    out = matched_filter_rows(np.asarray(recording.samples)[None, :], replica.samples)[0]
    return Signal(out, recording.sample_rate)


def matched_filter_rows(channels: np.ndarray, replica: np.ndarray) -> np.ndarray:
    """Matched-filter every row of ``channels`` against ``replica`` at once."""
    x = np.asarray(channels, dtype=float)
    h = np.asarray(replica, dtype=float)
    n = x.shape[-1]
    full = sps.fftconvolve(x, h[None, ::-1], mode="full", axes=-1)
    # lag 0 of the correlation sits at index len(h) - 1 of the full convolution
    return full[..., h.size - 1 : h.size - 1 + n]


def analytic_signal(x: np.ndarray) -> np.ndarray:
    """Full-length FFT analytic signal along the last axis."""
    return sps.hilbert(np.asarray(x, dtype=float), axis=-1)


def envelope(sig: Signal) -> Signal:
    if len(sig) < 2:
        raise ValueError("envelope needs at least two samples")
    return Signal(np.abs(analytic_signal(sig.samples)), sig.sample_rate)


@dataclass(frozen=True)
class RawFrame:
    """One sonar measurement: ``channels`` is num_mics x num_samples float32."""

    channels: np.ndarray
    sample_rate: float
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        ch = np.array(self.channels, dtype=np.float32, copy=True)
        if ch.ndim != 2 or ch.shape[0] < 1 or ch.shape[1] < 1:
            raise ValueError("frame channels must be a non-empty 2-D matrix")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)

    @property
    def num_mics(self) -> int:
        return int(self.channels.shape[0])

    @property
    def num_samples(self) -> int:
        return int(self.channels.shape[1])


def write_raw_frame(frame: RawFrame, path: str | Path) -> None:
    header = (
        f"{RAW_MAGIC} {RAW_VERSION} {frame.num_mics} {frame.num_samples} "
        f"{float(frame.sample_rate)!r} {float(frame.timestamp)!r}\n"
    )
    with open(path, "wb") as handle:
        handle.write(header.encode("ascii"))
        handle.write(np.ascontiguousarray(frame.channels, dtype="<f4").tobytes())


def read_raw_frame(path: str | Path) -> RawFrame:
    with open(path, "rb") as handle:
        header = handle.readline().decode("ascii").split()
        if len(header) != 6 or header[0] != RAW_MAGIC:
            raise ValueError(f"{path}: not a raw frame file")
        if int(header[1]) != RAW_VERSION:
            raise ValueError(f"{path}: unsupported raw frame version {header[1]}")
        num_mics, num_samples = int(header[2]), int(header[3])
        sample_rate, timestamp = float(header[4]), float(header[5])
        body = handle.read()
    expected = num_mics * num_samples * 4
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<f4").reshape(num_mics, num_samples)
    return RawFrame(data, sample_rate, timestamp)
