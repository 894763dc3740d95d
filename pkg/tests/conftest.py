from __future__ import annotations

import pytest

from steadybeam import diagnostics
from steadybeam.geometry import OMNI, DirectivityModel
from steadybeam.rig import Rig


@pytest.fixture(autouse=True)
def _fresh_counters():
    diagnostics.reset()
    yield


@pytest.fixture(scope="session")
def rig() -> Rig:
    """Default head: 32-mic disc, piston emitter, 61-entry bank."""
    return Rig()


@pytest.fixture(scope="session")
def omni_rig(rig: Rig) -> Rig:
    return Rig(array=rig.array, directivity=OMNI, bank=rig.bank)


@pytest.fixture(scope="session")
def piston() -> DirectivityModel:
    return DirectivityModel()


@pytest.fixture(scope="session")
def piston_calibration(rig: Rig):
    from steadybeam.gain import run_calibration_sweep

    return run_calibration_sweep(rig, [float(a) for a in range(-30, 31)])


@pytest.fixture(scope="session")
def piston_table(piston_calibration):
    from steadybeam.gain import calibrate_gain

    return calibrate_gain(piston_calibration)
