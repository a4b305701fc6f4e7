import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stnosense.units import (SensorGeometry, UnitError, current_to_density, emu_cc_to_si, normalize,
                             oersted_to_si, parse_quantity, si_to_emu_cc, si_to_oersted)

finite = st.floats(-1e9, 1e9, allow_nan=False)


@pytest.mark.parametrize("oe, expected", [(0.0, 0.0), (1.0, 79.5775), (5000.0, 3.97887e5)])
def test_oersted_examples(oe, expected):
    assert oersted_to_si(oe) == pytest.approx(expected, rel=1e-5, abs=0)


@pytest.mark.parametrize("emu, expected", [(0.0, 0.0), (480.0, 4.8e5), (1.0, 1000.0)])
def test_emu_cc_examples(emu, expected):
    assert emu_cc_to_si(emu) == expected


@pytest.mark.parametrize("i, expected", [(200e-6, 2.2222e11), (0.0, 0.0), (100e-6, 1.1111e11)])
def test_current_density(i, expected):
    assert current_to_density(i, SensorGeometry()) == pytest.approx(expected, rel=1e-4, abs=0)


@given(finite)
def test_round_trips(x):
    assert si_to_oersted(oersted_to_si(x)) == pytest.approx(x, rel=1e-12, abs=1e-300)
    assert si_to_emu_cc(emu_cc_to_si(x)) == pytest.approx(x, rel=1e-12, abs=1e-300)


@given(finite, st.floats(-1e3, 1e3, allow_nan=False))
def test_linearity(x, a):
    assert oersted_to_si(a * x) == pytest.approx(a * oersted_to_si(x), rel=1e-12, abs=1e-200)
    assert emu_cc_to_si(a * x) == pytest.approx(a * emu_cc_to_si(x), rel=1e-12, abs=1e-200)


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-6))
def test_normalize_gives_unit_vector(v):
    assert abs(np.linalg.norm(normalize(v)) - 1.0) <= 1e-9


def test_geometry_volumes_and_guard():
    g = SensorGeometry()
    assert g.area == pytest.approx(9e-16)
    assert g.volume_free == pytest.approx(1.35e-24)
    with pytest.raises(ValueError, match="t_free"):
        SensorGeometry(t_free=0.0)
    with pytest.raises(ValueError):
        SensorGeometry(length=-1e-9)


def test_pinned_layer_sits_below_free_layer():
    g = SensorGeometry()
    assert g.pinned_center[2] == pytest.approx(-(0.75e-9 + 2e-9 + 1e-9))


@pytest.mark.parametrize("text, dim, expected", [
    ("5 kOe", "field", 3.97887357729738e5),
    ("30 nm", "length", 30e-9),
    ("200 uA", "current", 200e-6),
    ("480 emu/cc", "magnetization", 4.8e5),
    ("40 kT", "energy", 40 * 1.380649e-23 * 300),
    ("0.1 GHz", "frequency", 1e8),
    ("900 nm2", "area", 9e-16),
    ("2 kohm", "resistance", 2000.0),
    ("50 deg", "angle", math.radians(50)),
    (1.5, "length", 1.5),
])
def test_parse_quantity(text, dim, expected):
    assert parse_quantity(text, dim) == pytest.approx(expected, rel=1e-12)


def test_parse_quantity_exact_decimal_prefixes():
    assert parse_quantity("30 nm", "length") == 3e-08
    assert parse_quantity("1.5 nm", "length") == 1.5e-09


@pytest.mark.parametrize("text, dim", [("5 um", "field"), ("5 furlongs", "length"), ("abc", "length"),
                                       (True, "length"), ("3 mK", "temperature")])
def test_parse_quantity_rejects(text, dim):
    with pytest.raises(UnitError):
        parse_quantity(text, dim)
