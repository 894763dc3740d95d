from __future__ import annotations

import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from steadybeam import diagnostics
from steadybeam.geometry import MicArray, direction_unit_vector, random_disc_layout
from steadybeam.steering import (
    DirectionGrid,
    bank_memory_bytes,
    build_bank,
    compute_delay_matrix,
    default_azimuths,
    load_bank,
    save_bank,
    select_steering,
    single_angle_bank,
)

C = 343.0
PAIR = MicArray(((0, 0.05, 0), (0, -0.05, 0)), (0, 0, 0))


def path_difference_oracle(array: MicArray, az: float, el: float, c: float = C) -> np.ndarray:
    """Plane-wave arrival times by projecting each mic onto the propagation axis."""
    u = direction_unit_vector(az, el)
    arrivals = np.array([-float(np.dot(p, u)) / c for p in array.mic_positions])
    return arrivals - arrivals.min()


@pytest.fixture(scope="module")
def bank(rig):
    return rig.bank


class TestDelayMatrix:
    def test_single_mic_at_origin(self):
        m = compute_delay_matrix(MicArray(((0, 0, 0),), (0, 0, 0.01)), DirectionGrid(default_azimuths(), 12.0))
        assert np.all(m.delays == 0)

    def test_broadside_pair(self):
        m = compute_delay_matrix(PAIR, DirectionGrid([0.0], 0.0), C)
        np.testing.assert_array_equal(m.delays[:, 0], [0, 0])

    def test_endfire_pair(self):
        m = compute_delay_matrix(PAIR, DirectionGrid([90.0], 0.0), C)
        assert abs(m.delays[1, 0] - m.delays[0, 0]) == pytest.approx(0.1 / 343, abs=1e-15)
        assert 0.1 / 343 == pytest.approx(291.5e-6, abs=0.1e-6)

    @pytest.mark.parametrize("el", [-30.0, -11.0, 0.0, 7.0, 30.0])
    def test_geometric_oracle(self, el):
        array = random_disc_layout()
        az = default_azimuths()
        m = compute_delay_matrix(array, DirectionGrid(az, el), C)
        for j, a in enumerate(az):
            assert np.max(np.abs(m.delays[:, j] - path_difference_oracle(array, a, el))) <= 1e-12

    def test_column_minimum_zero_and_nonnegative(self):
        m = compute_delay_matrix(random_disc_layout(), DirectionGrid(default_azimuths(), 5.0))
        assert np.all(m.delays >= 0)
        assert np.all(m.delays.min(axis=0) == 0)

    @given(st.tuples(*[st.floats(-1, 1)] * 3))
    def test_translation_invariance(self, shift):
        base = random_disc_layout(count=6, seed=3)
        moved = MicArray(base.mic_positions + np.asarray(shift), base.emitter_position + np.asarray(shift))
        grid = DirectionGrid(np.arange(-90.0, 91.0, 15.0), -8.0)
        a = compute_delay_matrix(base, grid)
        b = compute_delay_matrix(moved, grid)
        np.testing.assert_allclose(a.delays, b.delays, atol=1e-12)

    def test_absolute_arrivals(self):
        m = compute_delay_matrix(PAIR, DirectionGrid([90.0], 0.0), C)
        np.testing.assert_allclose(m.delays[:, 0] + m.offsets[0], [-0.05 / C, 0.05 / C])

    def test_bad_speed(self):
        with pytest.raises(ValueError):
            compute_delay_matrix(PAIR, DirectionGrid([0.0]), 0.0)


class TestDirectionGrid:
    @pytest.mark.parametrize("az", [[], [0.0, 0.0], [10.0, 5.0], [-91.0, 0.0], [0.0, 90.5]])
    def test_invalid(self, az):
        with pytest.raises(ValueError):
            DirectionGrid(az, 0.0)


class TestBank:
    def test_default_count(self, bank):
        assert len(bank) == 61

    def test_coarse_count(self):
        assert len(build_bank(random_disc_layout(), np.array([0.0]), -30, 30, 5)) == 13

    def test_degenerate_span(self):
        with pytest.raises(ValueError):
            build_bank(random_disc_layout(), None, 0, 0, 1)

    def test_non_dividing_resolution(self):
        with pytest.raises(ValueError):
            build_bank(random_disc_layout(), None, -30, 30, 7)

    def test_exact_grid(self, bank):
        assert bank.elevations.tolist() == [float(-30 + k) for k in range(61)]

    def test_matrices_match_direct_build(self, bank):
        direct = compute_delay_matrix(random_disc_layout(), DirectionGrid(default_azimuths(), 11.0))
        np.testing.assert_array_equal(bank.at(11.0).delays, direct.delays)

    def test_build_time(self):
        t0 = time.perf_counter()
        build_bank(random_disc_layout())
        assert time.perf_counter() - t0 < 10.0

    def test_immutable(self, bank):
        with pytest.raises(ValueError):
            bank.matrices[0].delays[0, 0] = 1.0
        with pytest.raises(AttributeError):
            bank.theta_c_min = -10


class TestSelect:
    def test_tilt_minus_10_78_selects_11(self, bank):
        theta_c, m = select_steering(bank, -10.78)
        assert theta_c == 11.0 and m.elevation == 11.0

    def test_zero(self, bank):
        assert select_steering(bank, 0.0)[0] == 0.0

    def test_clamp(self, bank):
        assert select_steering(bank, -45.0)[0] == 30.0
        assert select_steering(bank, 45.0)[0] == -30.0
        assert diagnostics.count("steering_clamped") == 2

    @pytest.mark.parametrize("theta", range(-30, 31))
    def test_on_grid(self, bank, theta):
        assert select_steering(bank, float(theta))[0] == -theta

    @pytest.mark.parametrize("theta,expected", [(-0.5, 1.0), (0.5, -1.0), (-10.5, 11.0), (10.5, -11.0),
                                                (-29.5, 30.0), (3.49, -3.0), (3.51, -4.0)])
    def test_ties_away_from_zero(self, bank, theta, expected):
        assert select_steering(bank, theta)[0] == expected

    @given(st.floats(-60, 60))
    def test_nearest(self, theta):
        b = _BANK
        theta_c, _ = select_steering(b, theta)
        target = min(30.0, max(-30.0, -theta))
        assert abs(theta_c - target) <= 0.5 + 1e-9

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite(self, bank, bad):
        with pytest.raises(ValueError):
            select_steering(bank, bad)

    def test_single_entry_bank(self):
        b = single_angle_bank(random_disc_layout(count=4), 0.0)
        for theta in (-40.0, 0.0, 12.3):
            assert select_steering(b, theta)[0] == 0.0

    def test_coarse_bank_ties(self):
        b = build_bank(random_disc_layout(count=4), np.array([0.0]), -30, 30, 5)
        assert select_steering(b, -12.5)[0] == 15.0
        assert select_steering(b, 12.5)[0] == -15.0
        assert select_steering(b, -11.0)[0] == 10.0


_BANK = build_bank(random_disc_layout(count=4), np.array([0.0]))


class TestMemory:
    def test_default_bytes(self, bank):
        assert bank_memory_bytes(bank) == 61 * 32 * 181 * 4 == 1_413_248

    def test_linear_in_azimuths(self):
        a = random_disc_layout(count=8)
        small = build_bank(a, np.arange(-45.0, 45.0, 1.0))
        large = build_bank(a, np.arange(-90.0, 90.0, 1.0))
        assert bank_memory_bytes(large) == 2 * bank_memory_bytes(small)


class TestCache:
    def test_round_trip(self, tmp_path, bank, rig):
        save_bank(bank, tmp_path / "bank.sbbank")
        back = load_bank(tmp_path / "bank.sbbank", rig.array)
        assert len(back) == 61
        assert back.elevations.tolist() == bank.elevations.tolist()
        for a, b in zip(bank.matrices, back.matrices):
            np.testing.assert_allclose(a.delays, b.delays, rtol=1e-6, atol=1e-12)
            np.testing.assert_allclose(a.offsets, b.offsets, rtol=1e-6, atol=1e-12)

    def test_float32_little_endian(self, tmp_path):
        b = build_bank(PAIR, np.array([-90.0, 0.0, 90.0]), -1, 1, 1)
        save_bank(b, tmp_path / "b.sbbank")
        raw = (tmp_path / "b.sbbank").read_bytes()
        header, body = raw.split(b"\n", 1)
        assert header.startswith(b"SBBANK 1 ")
        assert len(body) == 3 * (2 * 3 + 3) * 4
        np.testing.assert_allclose(np.frombuffer(body[:24], "<f4").reshape(2, 3), b.matrices[0].delays, rtol=1e-6)

    def test_rejects_other_array(self, tmp_path, bank):
        save_bank(bank, tmp_path / "bank.sbbank")
        with pytest.raises(ValueError, match="different array"):
            load_bank(tmp_path / "bank.sbbank", random_disc_layout(seed=7))
