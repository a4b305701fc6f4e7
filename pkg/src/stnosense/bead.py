"""Magnetic nanoparticle perturbation of the sensor.

Chain: field at the bead (external + stray fields of the two MTJ layers),
superparamagnetic Langevin moment of the bead, and the bead's dipole field
averaged over the free-layer volume.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .units import KB, MU0, SensorGeometry, vec3

SERIES_CUTOFF = 1e-4


class QuadratureWarning(UserWarning):
    """Grid doubling changed the averaged field by more than the tolerance."""


@dataclass(frozen=True)
class BeadParams:
    """Fe3O4 bead: 200 nm diameter, 480 emu/cc, centre 400 nm above the free layer."""

    radius: float = 100e-9
    ms_bead: float = 4.8e5
    position: np.ndarray = field(default_factory=lambda: vec3(0.0, 0.0, 400e-9))
    temperature: float = 300.0

    def __post_init__(self):
        if not self.radius > 0 or not self.ms_bead > 0:
            raise ValueError("bead radius and saturation magnetization must be positive")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius ** 3

    @property
    def saturation_moment(self) -> float:
        return self.ms_bead * self.volume


@dataclass(frozen=True)
class QuadratureConfig:
    grid_points: int = 8  # per axis, volume average
    segments: int = 64  # per face edge, surface-charge integral
    tolerance: float = 1e-3

    def __post_init__(self):
        if self.grid_points < 2 or self.segments < 2:
            raise ValueError("quadrature counts must be >= 2")


def langevin(x):
    """coth(x) - 1/x, odd, with a series branch near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    out = np.where(small, x / 3.0 - x ** 3 / 45.0, 1.0 / np.tanh(safe) - 1.0 / safe)
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class _Box:
    center: np.ndarray
    half: np.ndarray  # half extents along x, y, z

    def contains(self, p, pad=0.0) -> bool:
        return bool(np.all(np.abs(np.asarray(p) - self.center) <= self.half + pad))


def layer_box(geometry: SensorGeometry, layer: str) -> _Box:
    if layer == "free":
        return _Box(geometry.center, 0.5 * vec3(geometry.length, geometry.width, geometry.t_free))
    if layer == "pinned":
        return _Box(geometry.pinned_center, 0.5 * vec3(geometry.length, geometry.width, geometry.t_pinned))
    raise ValueError(f"unknown layer {layer!r}")


def _stack_box(geometry: SensorGeometry) -> _Box:
    top = geometry.center[2] + 0.5 * geometry.t_free
    bottom = geometry.pinned_center[2] - 0.5 * geometry.t_pinned
    c = geometry.center.copy()
    c[2] = 0.5 * (top + bottom)
    return _Box(c, 0.5 * vec3(geometry.length, geometry.width, top - bottom))


def box_stray_field(magnetization, box: _Box, at, segments: int = 64) -> np.ndarray:
    """Field of a uniformly magnetized box from its surface magnetic charges.

    sigma = M . n on each face; H(r) = (1/4 pi) sum_faces int sigma (r - r') / |r - r'|^3 dA'.
    Faces are integrated with Gauss-Legendre nodes, ``segments`` per edge.
    """
    mvec = np.asarray(magnetization, dtype=float)
    at = np.asarray(at, dtype=float)
    if box.contains(at):
        raise ValueError("evaluation point lies inside the magnetized layer")
    nodes, weights = np.polynomial.legendre.leggauss(segments)
    h = np.zeros(3)
    for axis in range(3):
        if mvec[axis] == 0.0:
            continue
        u, v = [a for a in range(3) if a != axis]
        pu = box.center[u] + box.half[u] * nodes
        pv = box.center[v] + box.half[v] * nodes
        wuv = np.outer(weights, weights) * box.half[u] * box.half[v]
        PU, PV = np.meshgrid(pu, pv, indexing="ij")
        for sign in (1.0, -1.0):
            sigma = sign * mvec[axis]
            src = np.empty(PU.shape + (3,))
            src[..., axis] = box.center[axis] + sign * box.half[axis]
            src[..., u] = PU
            src[..., v] = PV
            d = at - src
            r3 = np.linalg.norm(d, axis=-1) ** 3
            h += sigma * np.einsum("ij,ijk->k", wuv / r3, d)
    return h / (4.0 * math.pi)


def layer_stray_field(layer: str, magnetization, geometry: SensorGeometry, at,
                      quad: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Stray field (A/m) of the free or pinned layer at point ``at``."""
    return box_stray_field(magnetization, layer_box(geometry, layer), at, quad.segments)


def field_at_bead(bead: BeadParams, params, h_ext, quad: QuadratureConfig = QuadratureConfig(),
                  free_direction: Optional[np.ndarray] = None) -> np.ndarray:
    """Total field polarizing the bead: external plus both layers' stray fields.

    ``params`` is a MagnetParams. The free layer is taken along its easy axis
    unless ``free_direction`` is given (quasi-static bead polarization).
    """
    geom = params.geometry
    if _stack_box(geom).contains(bead.position, pad=bead.radius):
        raise ValueError("bead overlaps the sensor stack")
    m_free = params.easy_axis if free_direction is None else np.asarray(free_direction, dtype=float)
    h = np.asarray(h_ext, dtype=float).copy()
    if params.ms_free != 0.0:
        h += layer_stray_field("free", params.ms_free * m_free, geom, bead.position, quad)
    if params.ms_pinned != 0.0:
        h += layer_stray_field("pinned", params.ms_pinned * params.m_p, geom, bead.position, quad)
    return h


def bead_moment(h_tnp, bead: BeadParams) -> np.ndarray:
    """Langevin moment (A m^2) along the polarizing field."""
    if not bead.temperature > 0:
        raise ValueError("bead temperature must be positive")
    h = np.asarray(h_tnp, dtype=float)
    hmag = float(np.linalg.norm(h))
    if hmag == 0.0:
        return vec3()
    m_sat = bead.saturation_moment
    x = MU0 * m_sat * hmag / (KB * bead.temperature)
    return m_sat * langevin(x) * h / hmag


def dipole_field(moment, r) -> np.ndarray:
    """Point-dipole field at displacement(s) ``r`` (..., 3) from the dipole, A/m."""
    m = np.asarray(moment, dtype=float)
    r = np.asarray(r, dtype=float)
    rn = np.linalg.norm(r, axis=-1, keepdims=True)
    rhat = r / rn
    return (3.0 * np.sum(m * rhat, axis=-1, keepdims=True) * rhat - m) / (4.0 * math.pi * rn ** 3)


def _midpoint_average(moment, box: _Box, source, n: int) -> np.ndarray:
    axes = [box.center[a] + box.half[a] * ((np.arange(n) + 0.5) / n * 2.0 - 1.0) for a in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
    return dipole_field(moment, pts - source).mean(axis=0)


def averaged_bead_field(moment, geometry: SensorGeometry, bead_position,
                        quad: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Bead dipole field averaged over the free-layer volume (midpoint rule).

    A QuadratureWarning is emitted if doubling the grid moves the result by
    more than ``quad.tolerance`` relative.
    """
    box = layer_box(geometry, "free")
    src = np.asarray(bead_position, dtype=float)
    if box.contains(src):
        raise ValueError("bead centre lies inside the sensor")
    coarse = _midpoint_average(moment, box, src, quad.grid_points)
    scale = np.linalg.norm(coarse)
    if scale > 0:
        fine = _midpoint_average(moment, box, src, 2 * quad.grid_points)
        change = np.linalg.norm(fine - coarse) / scale
        if change > quad.tolerance:
            warnings.warn(f"averaged bead field not converged: grid doubling changed it by {change:.2e}",
                          QuadratureWarning, stacklevel=2)
    return coarse


def bead_field_at_sensor(bead: BeadParams, params, h_ext, quad: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Full chain: polarizing field -> Langevin moment -> volume-averaged field."""
    h_tnp = field_at_bead(bead, params, h_ext, quad)
    moment = bead_moment(h_tnp, bead)
    return averaged_bead_field(moment, params.geometry, bead.position, quad)
