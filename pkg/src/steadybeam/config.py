"""Pipeline configuration.

A single YAML file; every key is optional and falls back to the defaults
below. Relative paths are resolved against the config file's directory.

.. code-block:: yaml

    seed: 0
    output: out
    sample_rate: 450000
    array:            # or a path to an array YAML file
      layout: random-disc
      seed: 2024
      count: 32
      radius_m: 0.04
    emission: {f_start: 80000, f_end: 20000, duration: 0.002, amplitude: 1.0}
    directivity: {model_kind: circular_piston, aperture_radius: 0.005, reference_frequency: 40000}
    bank:
      theta_c_min: -30
      theta_c_max: 30
      resolution: 1
      azimuths: {start: -90, stop: 90, step: 1}
      speed_of_sound: 343
      cache: null     # optional bank cache file
    beamformer: {decimation: 8, upsample: 4, max_range: null}
    gain: calibrate   # or a gain table path
    calibration: {reference_range: 2.0, angles: {start: -30, stop: 30, step: 1}}
    ahrs: {beta: 0.1, rate: 100, warmup: 1.0, initial_gain: 2.0,
           gyro_noise: 0.001, accel_noise: 0.02, lead_in: 2.0, imu_stream: null}
    simulator:
      scene: default  # "default", "boresight", or a scene file path
      noise_sigma: null   # overrides the scene value when set
      tilt_profile: null  # tilt profile path; else constant_tilt for `duration`
      constant_tilt: 0.0
      duration: 2.0
      frame_rate: 5.0
    sweep: {tilts: {start: -30, stop: 30, step: 1}}

Seeds: every random stream is derived from the root ``seed`` with
:func:`derive_seed` and a purpose tag (``frame``, ``imu``, ``calibration``,
``bench``) plus an index; the sweep uses ``seed + tilt_index`` directly.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .dsp import EmissionSpec
from .geometry import DirectivityModel, MicArray, array_from_config, load_array
from .simulator import Scene, TiltProfile, boresight_scene, default_scene, load_scene, load_tilt_profile
from .steering import grid_count

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "output": "out",
    "sample_rate": 450_000.0,
    "array": {"layout": "random-disc", "seed": 2024, "count": 32, "radius_m": 0.040},
    "emission": {"f_start": 80_000.0, "f_end": 20_000.0, "duration": 0.002, "amplitude": 1.0},
    "directivity": {"model_kind": "circular_piston", "aperture_radius": 0.005, "reference_frequency": 40_000.0},
    "bank": {
        "theta_c_min": -30.0,
        "theta_c_max": 30.0,
        "resolution": 1.0,
        "azimuths": {"start": -90.0, "stop": 90.0, "step": 1.0},
        "speed_of_sound": 343.0,
        "cache": None,
    },
    "beamformer": {"decimation": 8, "upsample": 4, "max_range": None},
    "gain": "calibrate",
    "calibration": {"reference_range": 2.0, "angles": {"start": -30.0, "stop": 30.0, "step": 1.0}},
    "ahrs": {
        "beta": 0.1,
        "rate": 100.0,
        "warmup": 1.0,
        "initial_gain": 2.0,
        "gyro_noise": 0.001,
        "accel_noise": 0.02,
        "lead_in": 2.0,
        "imu_stream": None,
    },
    "simulator": {
        "scene": "default",
        "noise_sigma": None,
        "tilt_profile": None,
        "constant_tilt": 0.0,
        "duration": 2.0,
        "frame_rate": 5.0,
    },
    "sweep": {"tilts": {"start": -30.0, "stop": 30.0, "step": 1.0}},
}

_PURPOSES = {"frame": 1, "imu": 2, "calibration": 3, "bench": 4}


class ConfigError(ValueError):
    """Invalid or missing configuration; the CLI maps it to exit code 1."""


def derive_seed(root: int, purpose: str, index: int = 0) -> int:
    """Independent 32-bit seed for one purpose/index under a root seed."""
    seq = np.random.SeedSequence([int(root), _PURPOSES[purpose], int(index)])
    return int(seq.generate_state(1)[0])


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def angle_range(spec: Any) -> list[float]:
    """Expand ``{start, stop, step}`` (inclusive) or pass through an explicit list."""
    if isinstance(spec, dict):
        start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        n = grid_count(start, stop, step) if stop > start else 1
        return [start + k * step for k in range(n)]
    return [float(v) for v in spec]


@dataclass
class PipelineConfig:
    raw: dict[str, Any]
    base_dir: Path

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> "PipelineConfig":
        doc: dict[str, Any] = {}
        base = Path.cwd()
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file not found: {p}")
            with open(p, "r", encoding="utf-8") as handle:
                doc = yaml.safe_load(handle) or {}
            if not isinstance(doc, dict):
                raise ConfigError(f"{p}: config must be a mapping")
            base = p.resolve().parent
        cfg = cls(_merge(_merge(DEFAULTS, doc), overrides or {}), base)
        cfg.validate()
        return cfg

    def _path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def _file(self, section: str, key: str, value: Any) -> Path | None:
        if value in (None, "", "default", "boresight", "calibrate"):
            return None
        p = self._path(str(value))
        if not p.is_file():
            raise ConfigError(f"{section}.{key}: file not found: {p}")
        return p

    def validate(self) -> None:
        r = self.raw
        if isinstance(r["array"], str):
            self._file("array", "path", r["array"])
        self._file("gain", "path", r["gain"])
        self._file("simulator", "scene", r["simulator"]["scene"])
        self._file("simulator", "tilt_profile", r["simulator"]["tilt_profile"])
        self._file("ahrs", "imu_stream", r["ahrs"]["imu_stream"])
        b = r["bank"]
        try:
            grid_count(float(b["theta_c_min"]), float(b["theta_c_max"]), float(b["resolution"]))
            angle_range(b["azimuths"])
            angle_range(r["sweep"]["tilts"])
            angle_range(r["calibration"]["angles"])
            self.emission().validate(self.sample_rate)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        if float(r["simulator"]["frame_rate"]) <= 0 or float(r["ahrs"]["rate"]) <= 0:
            raise ConfigError("frame_rate and ahrs.rate must be positive")

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def sample_rate(self) -> float:
        return float(self.raw["sample_rate"])

    @property
    def speed_of_sound(self) -> float:
        return float(self.raw["bank"]["speed_of_sound"])

    @property
    def output_dir(self) -> Path:
        return self._path(str(self.raw["output"]))

    def array(self) -> MicArray:
        spec = self.raw["array"]
        if isinstance(spec, str):
            return load_array(self._path(spec))
        return array_from_config(spec)

    def emission(self) -> EmissionSpec:
        e = self.raw["emission"]
        return EmissionSpec(float(e["f_start"]), float(e["f_end"]), float(e["duration"]), float(e["amplitude"]))

    def directivity(self) -> DirectivityModel:
        d = self.raw["directivity"]
        return DirectivityModel(
            str(d.get("model_kind", "circular_piston")),
            float(d.get("aperture_radius", 0.005)),
            float(d.get("reference_frequency", 40_000.0)),
            self.speed_of_sound,
        )

    def scene(self) -> Scene:
        sim = self.raw["simulator"]
        name = sim["scene"]
        if name in (None, "default"):
            scene = default_scene()
        elif name == "boresight":
            scene = boresight_scene()
        else:
            scene = load_scene(self._path(str(name)))
        noise = scene.noise_sigma if sim.get("noise_sigma") is None else float(sim["noise_sigma"])
        return Scene(scene.reflectors, noise, self.speed_of_sound, scene.absorption_db_per_m)

    def tilt_profile(self) -> TiltProfile:
        sim = self.raw["simulator"]
        if sim.get("tilt_profile"):
            return load_tilt_profile(self._path(str(sim["tilt_profile"])))
        return TiltProfile.constant(float(sim["constant_tilt"]), float(sim["duration"]))

    def azimuths(self) -> list[float]:
        return angle_range(self.raw["bank"]["azimuths"])

    def sweep_tilts(self) -> list[float]:
        return angle_range(self.raw["sweep"]["tilts"])

    def calibration_angles(self) -> list[float]:
        return angle_range(self.raw["calibration"]["angles"])

    def gain_path(self) -> Path | None:
        return self._file("gain", "path", self.raw["gain"])

    def bank_cache(self) -> Path | None:
        cache = self.raw["bank"].get("cache")
        return self._path(str(cache)) if cache else None

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True, default=str).encode()).hexdigest()[:16]
