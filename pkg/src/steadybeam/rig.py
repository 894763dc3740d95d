"""A simulated sonar head plus its processing chain, bundled for reuse."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .beamformer import DEFAULT_DECIMATION, DEFAULT_UPSAMPLE, AcousticImage, das_beamform
from .dsp import DEFAULT_SAMPLE_RATE, EmissionSpec, RawFrame, generate_chirp, matched_filter_rows
from .geometry import DirectivityModel, MicArray, random_disc_layout
from .simulator import Scene, required_duration, synthesize_frame
from .steering import DelayMatrix, SteeringBank, build_bank


@dataclass(frozen=True)
class Rig:
    array: MicArray = field(default_factory=random_disc_layout)
    emission: EmissionSpec = field(default_factory=EmissionSpec)
    directivity: DirectivityModel = field(default_factory=DirectivityModel)
    sample_rate: float = DEFAULT_SAMPLE_RATE
    bank: SteeringBank | None = None
    decimation: int = DEFAULT_DECIMATION
    upsample: int = DEFAULT_UPSAMPLE

    def __post_init__(self) -> None:
        self.emission.validate(self.sample_rate)
        if self.bank is None:
            object.__setattr__(self, "bank", build_bank(self.array))
        if self.bank.matrices[0].num_mics != self.array.num_mics:
            raise ValueError("steering bank does not match the array")

    @cached_property
    def replica(self) -> np.ndarray:
        return generate_chirp(self.emission, self.sample_rate).samples

    def frame(self, scene: Scene, tilt: float = 0.0, seed: int = 0,
              duration: float | None = None, timestamp: float = 0.0) -> RawFrame:
        if scene.speed_of_sound != self.bank.speed_of_sound:
            raise ValueError("scene and steering bank disagree on the speed of sound")
        if duration is None:
            duration = required_duration(scene, self.emission)
        return synthesize_frame(scene, self.array, self.emission, self.directivity, tilt,
                                self.sample_rate, duration, seed, timestamp)

    def filtered(self, frame: RawFrame) -> np.ndarray:
        """Per-channel matched filter output."""
        if frame.sample_rate != self.sample_rate:
            raise ValueError(f"frame sample rate {frame.sample_rate} != rig rate {self.sample_rate}")
        return matched_filter_rows(frame.channels, self.replica)

    def beamform(self, filtered: np.ndarray, delays: DelayMatrix, max_range: float) -> AcousticImage:
        return das_beamform(filtered, delays, self.sample_rate, max_range, self.decimation, self.upsample)

    def image(self, frame: RawFrame, delays: DelayMatrix, max_range: float) -> AcousticImage:
        return self.beamform(self.filtered(frame), delays, max_range)


def default_max_range(scene: Scene) -> float:
    """Image depth used when none is configured: just past the farthest reflector."""
    return max(0.5, scene.max_range() + 0.2)
