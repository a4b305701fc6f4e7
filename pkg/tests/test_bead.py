import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stnosense.bead import (BeadParams, QuadratureConfig, QuadratureWarning, averaged_bead_field, bead_field_at_sensor,
                            bead_moment, dipole_field, field_at_bead, langevin, layer_stray_field)
from stnosense.dynamics import FieldSources, MagnetParams
from stnosense.units import SensorGeometry, vec3

H5K = 3.97887e5
M_SAT = 2.0106e-15  # 4.8e5 * 4/3 pi (100 nm)^3


def test_langevin_values():
    assert langevin(0.0) == 0.0
    assert langevin(1e-6) == pytest.approx(1e-6 / 3, rel=1e-9)
    assert langevin(50.0) == pytest.approx(0.98, rel=1e-12)
    assert langevin(1.0) == pytest.approx(0.313035, abs=1e-6)


@given(st.floats(-200, 200, allow_nan=False))
def test_langevin_odd_and_bounded(x):
    assert langevin(-x) == -langevin(x)
    assert -1 < langevin(x) < 1


def test_langevin_branches_agree_at_cutoff():
    x = 1e-4
    direct = 1 / math.tanh(x) - 1 / x
    assert langevin(x * (1 - 1e-12)) == pytest.approx(direct, rel=1e-6)


def test_layer_far_field_matches_dipole():
    g = SensorGeometry()
    mvec = vec3(8e5, 0.0, 0.0)
    for at in (vec3(0, 0, 3e-6), vec3(3e-6, 0, 0), vec3(1.7e-6, 1.7e-6, 1.7e-6)):
        h = layer_stray_field("free", mvec, g, at)
        ref = dipole_field(mvec * g.volume_free, at - g.center)
        assert np.linalg.norm(h - ref) / np.linalg.norm(ref) < 0.01


def test_layer_zero_magnetization_and_symmetry():
    g = SensorGeometry()
    assert np.all(layer_stray_field("free", vec3(), g, vec3(0, 0, 1e-7)) == 0)
    h = layer_stray_field("free", vec3(8e5, 0, 0), g, vec3(0, 0, 50e-9))
    assert abs(h[1]) < 1e-9 * np.linalg.norm(h)
    assert abs(h[2]) < 1e-9 * np.linalg.norm(h)


def test_layer_inside_is_domain_error():
    with pytest.raises(ValueError):
        layer_stray_field("free", vec3(8e5, 0, 0), SensorGeometry(), vec3(0, 0, 0))
    with pytest.raises(ValueError):
        layer_stray_field("pinned", vec3(8e5, 0, 0), SensorGeometry(), SensorGeometry().pinned_center)


def test_layer_quadrature_converges():
    g = SensorGeometry()
    at = vec3(0, 0, 400e-9)
    coarse = layer_stray_field("pinned", vec3(-1e6, 0, 1e6), g, at, QuadratureConfig(segments=16))
    fine = layer_stray_field("pinned", vec3(-1e6, 0, 1e6), g, at, QuadratureConfig(segments=32))
    assert np.linalg.norm(fine - coarse) / np.linalg.norm(fine) < 1e-3


def test_field_at_bead_cases():
    p = MagnetParams()
    h_ext = FieldSources().h_static
    bead = BeadParams()
    h = field_at_bead(bead, p, h_ext)
    assert np.linalg.norm(h - h_ext) / np.linalg.norm(h_ext) < 0.05
    # demagnetized layers
    from dataclasses import replace
    quiet = replace(p, ms_pinned=0.0)
    assert np.allclose(field_at_bead(bead, replace(quiet, ms_free=1.0), h_ext, free_direction=vec3(0, 1, 0)),
                       h_ext, rtol=0, atol=1e-3)
    far = BeadParams(position=vec3(0, 0, 50e-6))
    assert np.linalg.norm(field_at_bead(far, p, vec3())) < 1e-3


def test_bead_overlapping_stack_is_rejected():
    with pytest.raises(ValueError):
        field_at_bead(BeadParams(position=vec3(0, 0, 50e-9)), MagnetParams(), vec3())


def test_bead_moment_cases():
    bead = BeadParams()
    assert np.all(bead_moment(vec3(), bead) == 0)
    m = bead_moment(vec3(H5K, 0, 0), bead)
    assert np.linalg.norm(m) == pytest.approx(M_SAT, rel=1e-3)
    assert m[1] == 0 and m[2] == 0
    huge = bead_moment(vec3(0, 0, 1e12), bead)
    assert np.linalg.norm(huge) == pytest.approx(bead.saturation_moment, rel=1e-9)
    with pytest.raises(ValueError):
        bead_moment(vec3(1, 0, 0), BeadParams(temperature=0.0))


def test_averaged_field_on_axis_oracle():
    g = SensorGeometry()
    h = averaged_bead_field(vec3(0, 0, M_SAT), g, vec3(0, 0, 400e-9))
    assert abs(h[2]) == pytest.approx(5.0e3, rel=0.01)
    # finite sensor size lowers the average slightly below the centre value
    assert abs(h[2]) < 2 * M_SAT / (4 * math.pi * (400e-9) ** 3)


def test_averaged_field_far_and_linear():
    g = SensorGeometry()
    pos = vec3(120e-9, -200e-9, 310e-9)
    m = vec3(1e-15, 2e-15, -0.5e-15)
    h = averaged_bead_field(m, g, pos)
    assert np.linalg.norm(h - dipole_field(m, -pos)) / np.linalg.norm(h) < 0.01
    assert np.allclose(averaged_bead_field(3.5 * m, g, pos), 3.5 * h, rtol=1e-12)
    assert np.all(averaged_bead_field(vec3(), g, pos) == 0)


def test_averaged_field_grid_doubling_converges():
    g = SensorGeometry()
    m = vec3(M_SAT, 0, 0)
    a = averaged_bead_field(m, g, vec3(0, 0, 400e-9), QuadratureConfig(grid_points=8))
    b = averaged_bead_field(m, g, vec3(0, 0, 400e-9), QuadratureConfig(grid_points=16))
    assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-3


def test_nonconverged_average_warns():
    g = SensorGeometry(length=400e-9, width=400e-9)
    with pytest.warns(QuadratureWarning):
        averaged_bead_field(vec3(0, 0, M_SAT), g, vec3(0, 0, 120e-9), QuadratureConfig(grid_points=2))


def test_bead_field_opposes_static_field():
    p = MagnetParams()
    h_static = FieldSources().h_static
    with warnings.catch_warnings():
        warnings.simplefilter("error", QuadratureWarning)
        hb = bead_field_at_sensor(BeadParams(), p, h_static)
    assert np.dot(hb, h_static) < 0
    # saturated moment along x seen from 400 nm above: -m / (4 pi d^3)
    assert hb[0] == pytest.approx(-M_SAT / (4 * math.pi * (400e-9) ** 3), rel=0.01)
