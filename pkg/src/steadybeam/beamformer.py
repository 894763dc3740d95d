"""Delay-and-sum beamforming into range x azimuth acoustic images.

Channels are matched-filtered first; the beamformer aligns the filtered
channels, averages them coherently and takes the envelope of the average.
Because the analytic-signal transform is linear, the envelope of the aligned
sum equals the magnitude of the aligned sum of per-channel analytic signals,
which is what is computed here.

Channel alignment is nearest-sample on an ``upsample``-times finer grid. The
finer grid is the analytic signal interpolated by zero-padding its spectrum
(band-limited, exact at the original sample instants). At the default 4x and
450 kHz the worst alignment error is 0.28 us, about 8 degrees of phase at
80 kHz; plain nearest-sample alignment at 450 kHz loses close to 30 degrees.

Export formats:

* CSV: ``# theta_c,<v>`` / ``# gain_applied,<v>`` comment lines, then a row
  ``range_m\\azimuth_deg,<az0>,<az1>,...`` followed by one row per range bin.
* PGM: binary 16-bit graymap (``P5``, maxval 65535, big-endian) with energies
  scaled by ``65535 / max``; a ``.txt`` sidecar records ``normalization``
  (the image max), ``theta_c`` and ``gain_applied``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import diagnostics
from .dsp import analytic_signal
from .steering import DelayMatrix

DEFAULT_DECIMATION = 8
DEFAULT_UPSAMPLE = 4


@dataclass(frozen=True)
class AcousticImage:
    energy: np.ndarray
    range_axis: np.ndarray
    azimuth_axis: np.ndarray
    theta_c: float = 0.0
    gain_applied: float = 1.0
    truncated_cells: int = 0

    def __post_init__(self) -> None:
        for name in ("energy", "range_axis", "azimuth_axis"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.energy.shape != (self.range_axis.size, self.azimuth_axis.size):
            raise ValueError("energy shape must be num_ranges x num_azimuths")
        if np.any(self.energy < 0):
            raise ValueError("image energies must be non-negative")

    def argmax(self) -> tuple[int, int]:
        """(range index, azimuth index) of the strongest cell."""
        r, a = np.unravel_index(int(np.argmax(self.energy)), self.energy.shape)
        return int(r), int(a)

    def peak_location(self) -> tuple[float, float]:
        """(range in meters, azimuth in degrees) of the strongest cell."""
        r, a = self.argmax()
        return float(self.range_axis[r]), float(self.azimuth_axis[a])

    def scaled(self, factor: float) -> "AcousticImage":
        return replace(self, energy=self.energy * factor, gain_applied=self.gain_applied * factor)


def range_bins(num_samples: int, sample_rate: float, c: float, max_range: float,
               decimation: int = DEFAULT_DECIMATION) -> np.ndarray:
    """Sample indices of the range bins: every ``decimation``-th sample up to ``max_range``."""
    if decimation < 1:
        raise ValueError("decimation must be >= 1")
    last = int(np.floor(2.0 * max_range / c * sample_rate + 1e-9))
    last = min(last, num_samples - 1)
    return np.arange(0, last + 1, decimation, dtype=np.int64)


def upsampled_analytic(x: np.ndarray, factor: int) -> np.ndarray:
    """Analytic signal of each row of ``x`` on a ``factor``-times finer time grid.

    ``out[..., k * factor]`` is exactly :func:`analytic_signal` of ``x`` at
    sample ``k``.
    """
    x = np.asarray(x, dtype=float)
    base = analytic_signal(x)
    if factor == 1:
        return base
    if factor < 1:
        raise ValueError("upsample factor must be >= 1")
    n = x.shape[-1]
    spectrum = np.fft.fft(base, axis=-1)
    padded = np.zeros(x.shape[:-1] + (n * factor,), dtype=complex)
    # the analytic spectrum is zero above Nyquist; bins 0..n/2 carry everything
    half = n // 2 + 1
    padded[..., :half] = spectrum[..., :half]
    out = np.fft.ifft(padded, axis=-1) * factor
    # keep the on-grid samples identical to the base-rate analytic signal
    out[..., ::factor] = base
    return out


def das_beamform(
    channels: np.ndarray,
    delays: DelayMatrix,
    sample_rate: float,
    max_range: float,
    decimation: int = DEFAULT_DECIMATION,
    upsample: int = DEFAULT_UPSAMPLE,
) -> AcousticImage:
    """Beamform matched-filtered channels along every direction of ``delays``.

    Args:
        channels: num_mics x num_samples matched-filter outputs. Real rows are
            converted to analytic signals; complex rows are used as given.
        delays: steering matrix; rows must line up with ``channels``.
        sample_rate: sampling rate in hertz.
        max_range: farthest range bin in meters.
        decimation: samples per range bin.
        upsample: alignment grid refinement; 1 aligns on raw samples.

    Cells whose aligned read runs past the end of the recording are zeroed
    and counted under ``beamform_truncated``. Cells that would read before
    the first sample (ranges inside the array's own extent) are zeroed
    without counting.
    """
    x = np.asarray(channels)
    if x.ndim != 2:
        raise ValueError("channels must be num_mics x num_samples")
    num_mics, num_samples = x.shape
    if num_mics != delays.num_mics:
        raise ValueError(f"frame has {num_mics} channels but delay matrix has {delays.num_mics} rows")
    c = delays.speed_of_sound
    if 2.0 * max_range / c > (num_samples - 1) / sample_rate + 1e-12:
        raise ValueError(f"max_range {max_range} m exceeds the frame span")

    if np.iscomplexobj(x):
        if upsample != 1:
            raise ValueError("complex (analytic) input requires upsample=1")
        analytic = x.astype(complex)
    else:
        analytic = upsampled_analytic(x, upsample)
    fine_len = analytic.shape[1]
    rows = range_bins(num_samples, sample_rate, c, max_range, decimation)
    fine_rows = rows * upsample
    shifts = delays.sample_shifts(sample_rate * upsample)

    acc = np.zeros((rows.size, shifts.shape[1]), dtype=complex)
    early = np.zeros(acc.shape, dtype=bool)
    late = np.zeros(acc.shape, dtype=bool)
    for m in range(num_mics):
        idx = fine_rows[:, None] + shifts[m][None, :]
        early |= idx < 0
        late |= idx >= fine_len
        acc += analytic[m][np.clip(idx, 0, fine_len - 1)]
    energy = np.abs(acc / num_mics)
    energy[early | late] = 0.0
    truncated = int(np.count_nonzero(late))
    if truncated:
        diagnostics.warn("beamform_truncated", f"{truncated} cells past the frame end", amount=truncated)

    range_axis = rows * c / (2.0 * sample_rate)
    return AcousticImage(energy, range_axis, delays.azimuths, delays.elevation, 1.0, truncated)


def _check_axes(a: AcousticImage, b: AcousticImage) -> None:
    if a.energy.shape != b.energy.shape or not (
        np.array_equal(a.range_axis, b.range_axis) and np.array_equal(a.azimuth_axis, b.azimuth_axis)
    ):
        raise ValueError("images have different axes")


def image_difference(a: AcousticImage, b: AcousticImage) -> np.ndarray:
    """Signed elementwise ``a - b``."""
    _check_axes(a, b)
    return a.energy - b.energy


def write_image_csv(image: AcousticImage, path: str | Path) -> None:
    lines = [
        f"# theta_c,{image.theta_c!r}",
        f"# gain_applied,{image.gain_applied!r}",
        "range_m\\azimuth_deg," + ",".join(repr(float(a)) for a in image.azimuth_axis),
    ]
    for r, row in zip(image.range_axis, image.energy):
        lines.append(repr(float(r)) + "," + ",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_image_csv(path: str | Path) -> AcousticImage:
    meta: dict[str, float] = {}
    rows: list[list[float]] = []
    azimuths: list[float] | None = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, value = line[1:].strip().split(",", 1)
            meta[key] = float(value)
        elif azimuths is None:
            azimuths = [float(v) for v in line.split(",")[1:]]
        else:
            rows.append([float(v) for v in line.split(",")])
    if azimuths is None:
        raise ValueError(f"{path}: missing azimuth header row")
    data = np.asarray(rows, dtype=float).reshape(-1, len(azimuths) + 1)
    return AcousticImage(
        data[:, 1:], data[:, 0], np.asarray(azimuths),
        meta.get("theta_c", 0.0), meta.get("gain_applied", 1.0),
    )


def write_image_pgm(image: AcousticImage, path: str | Path) -> Path:
    """Write the 16-bit graymap and its sidecar; returns the sidecar path."""
    path = Path(path)
    peak = float(image.energy.max())
    scale = 65535.0 / peak if peak > 0 else 0.0
    pixels = np.rint(image.energy * scale).astype(">u2")
    rows, cols = pixels.shape
    with open(path, "wb") as handle:
        handle.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        handle.write(pixels.tobytes())
    sidecar = path.with_suffix(".txt")
    sidecar.write_text(
        f"normalization={peak!r}\ntheta_c={image.theta_c!r}\ngain_applied={image.gain_applied!r}\n",
        encoding="utf-8",
    )
    return sidecar


def read_image_pgm(path: str | Path) -> tuple[np.ndarray, dict[str, float]]:
    """Return (16-bit pixel matrix, sidecar metadata)."""
    path = Path(path)
    raw = path.read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=">u2").reshape(rows, cols)
    meta = {}
    for line in path.with_suffix(".txt").read_text(encoding="utf-8").splitlines():
        key, value = line.split("=", 1)
        meta[key] = float(value)
    return pixels, meta
