"""Shared helpers for the test suite."""

from __future__ import annotations

from pathlib import Path

import yaml


def write_config(directory: Path, doc: dict, name: str = "config.yaml") -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return path


def small_run(directory: Path, **extra) -> Path:
    """Quick config: one reflector at 1 m, short image depth, gain table on disk."""
    (directory / "gain.csv").parent.mkdir(parents=True, exist_ok=True)
    (directory / "gain.csv").write_text("0,1\n11,1.34\n")
    (directory / "scene.yaml").write_text("reflectors:\n  - [0.95, 0.2, 0.0, 1.0]\n")
    doc = {
        "seed": 5,
        "output": "out",
        "gain": "gain.csv",
        "beamformer": {"max_range": 1.3},
        "simulator": {"scene": "scene.yaml", "constant_tilt": 0.0, "duration": 1.8, "frame_rate": 5.0},
    }
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key] = {**doc[key], **value}
        else:
            doc[key] = value
    return write_config(directory, doc)
