import numpy as np
import pytest
from hypothesis import given, strategies as st

from stnosense.dynamics import Trajectory
from stnosense.mtj import ResistancePair, resistance, voltage_series

cosines = st.floats(-1.0, 1.0, allow_nan=False)


@pytest.mark.parametrize("c, expected", [(0.0, 1500.0), (1.0, 1000.0), (-1.0, 2000.0)])
def test_resistance_examples(c, expected):
    assert resistance(c) == pytest.approx(expected)


def test_printed_sign_switch_swaps_endpoints():
    pair = ResistancePair(literal_sign=True)
    assert resistance(1.0, pair) == pytest.approx(2000.0)
    assert resistance(-1.0, pair) == pytest.approx(1000.0)


def test_domain_and_clamp():
    assert resistance(1.0 + 5e-10) == pytest.approx(1000.0)
    with pytest.raises(ValueError):
        resistance(1.0 + 1e-6)
    with pytest.raises(ValueError):
        ResistancePair(2e3, 1e3)


@given(cosines)
def test_bounded_and_affine(c):
    r = resistance(c)
    assert 1000.0 <= r <= 2000.0
    assert resistance(c) + resistance(-c) == pytest.approx(3000.0, abs=1e-9)


def _traj(m, current):
    n = len(m)
    return Trajectory(np.arange(n) * 1e-12, np.asarray(m, dtype=float), np.asarray(current, dtype=float))


def test_constant_perpendicular_voltage():
    m_p = np.array([0.0, 0.0, 1.0])
    v = voltage_series(_traj([[1.0, 0.0, 0.0]] * 5, [200e-6] * 5), m_p)
    assert np.allclose(v, 0.3)


def test_zero_current_and_linearity():
    m = np.tile([0.6, 0.0, 0.8], (4, 1))
    m_p = np.array([0.0, 0.0, 1.0])
    assert np.all(voltage_series(_traj(m, np.zeros(4)), m_p) == 0.0)
    i = np.array([1e-4, 2e-4, 3e-4, 4e-4])
    assert np.allclose(voltage_series(_traj(m, 2 * i), m_p), 2 * voltage_series(_traj(m, i), m_p))


def test_precessing_cone_peak_to_peak():
    phi = np.radians(20.0)
    tilt = np.radians(40.0)
    t = np.linspace(0, 2 * np.pi, 2001)
    # cone of half-angle phi about an axis tilted by `tilt` from m_p = z
    axis = np.array([np.sin(tilt), 0.0, np.cos(tilt)])
    e1 = np.array([np.cos(tilt), 0.0, -np.sin(tilt)])
    e2 = np.array([0.0, 1.0, 0.0])
    m = (np.cos(phi) * axis + np.sin(phi) * (np.outer(np.cos(t), e1) + np.outer(np.sin(t), e2)))
    m_p = np.array([0.0, 0.0, 1.0])
    v = voltage_series(_traj(m, np.full(len(t), 200e-6)), m_p)
    cos_range = np.cos(tilt - phi) - np.cos(tilt + phi)
    assert np.ptp(v) == pytest.approx(200e-6 * 1000.0 * cos_range / 2, rel=1e-6)
    assert np.allclose(v, 200e-6 * resistance(m @ m_p))


def test_empty_trajectory():
    with pytest.raises(ValueError):
        voltage_series(_traj(np.zeros((0, 3)), []), np.array([0.0, 0.0, 1.0]))
