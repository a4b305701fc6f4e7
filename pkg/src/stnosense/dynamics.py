"""Macrospin Landau-Lifshitz-Gilbert-Slonczewski dynamics of the free layer.

The Gilbert form with spin-transfer torque,

    dm/dt = -gamma m x H + alpha m x dm/dt + a_J m x (m_p x m),

is integrated in its explicit Landau-Lifshitz equivalent,

    (1 + alpha^2) dm/dt = -gamma m x H - alpha gamma m x (m x H)
                          + a_J m x (m_p x m) - alpha a_J m_p x m,

with a_J = gamma hbar P J / (mu0 e t_f Ms). gamma is in m/(A s) and H in A/m.
Thermal agitation enters as a Brown fluctuation field added to H and is
integrated with the Stratonovich-consistent Heun scheme.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernel
from .units import HBAR, E_CHARGE, KB, MU0, SensorGeometry, normalize, oersted_to_si, vec3

NOISE_BLOCK = 1 << 16


class IntegrationError(RuntimeError):
    """Raised when the right-hand side stops being finite."""

    def __init__(self, t: float, m: np.ndarray):
        super().__init__(f"non-finite derivative at t={t:.6e} s, m={np.array2string(m)}")
        self.t = t
        self.m = m


PINNED_TILT_DEG = 50.0


def _default_pinned():
    beta = math.radians(PINNED_TILT_DEG)
    return vec3(-math.cos(beta), 0.0, math.sin(beta))


@dataclass(frozen=True)
class MagnetParams:
    """Free/pinned layer material and geometry.

    Defaults reproduce the reference device: 30x30x1.5 nm free layer,
    Ms = 8e5 A/m, alpha = 0.01, gamma = 2.21e5 m/(A s), E_b = 40 kT at 300 K.
    The pinned layer points 50 degrees out of plane from -x towards +z, and the
    in-plane easy axis is y, perpendicular to the default bias field along x.
    A field collinear with the easy axis admits no stable precession cycle in
    this model, so the two must not be parallel for self-oscillation.
    """

    ms_free: float = 8e5
    ms_pinned: float = 15e5
    alpha: float = 0.01
    gamma: float = 2.21e5
    e_barrier: float = 40 * KB * 300.0
    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    polarization: float = 0.059
    m_p: np.ndarray = field(default_factory=_default_pinned)
    easy_axis: np.ndarray = field(default_factory=lambda: vec3(0.0, 1.0, 0.0))
    temperature: float = 300.0

    def __post_init__(self):
        # alpha = 0 and E_b = 0 are allowed for conservative reference runs
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if not 0.0 < self.polarization <= 1.0:
            raise ValueError("polarization must lie in (0, 1]")
        if not self.e_barrier >= 0.0:
            raise ValueError("e_barrier must be non-negative")
        if not self.ms_free > 0.0:
            raise ValueError("ms_free must be positive")
        if self.temperature < 0.0:
            raise ValueError("temperature must be non-negative")
        object.__setattr__(self, "m_p", normalize(self.m_p))
        object.__setattr__(self, "easy_axis", normalize(self.easy_axis))

    @property
    def volume(self) -> float:
        return self.geometry.volume_free

    @property
    def anisotropy_field(self) -> float:
        """H_k = 2 E_b / (mu0 Ms V)."""
        return 2.0 * self.e_barrier / (MU0 * self.ms_free * self.volume)

    @property
    def stt_prefactor(self) -> float:
        """a_J per unit current density, s^-1 per A/m^2."""
        return self.gamma * HBAR / (MU0 * E_CHARGE) * self.polarization / (self.geometry.t_free * self.ms_free)

    def with_barrier(self, e_barrier: float) -> "MagnetParams":
        return replace(self, e_barrier=e_barrier)


@dataclass(frozen=True)
class DriveCurrent:
    i_dc: float = 0.0
    i_rf: float = 0.0
    f_rf: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.i_rf < 0 or self.f_rf < 0:
            raise ValueError("i_rf and f_rf must be non-negative")

    def current(self, t):
        return self.i_dc + self.i_rf * np.cos(2.0 * np.pi * self.f_rf * np.asarray(t) + self.phase)


@dataclass(frozen=True)
class FieldSources:
    h_static: np.ndarray = field(default_factory=lambda: vec3(oersted_to_si(5000.0), 0.0, 0.0))
    h_rf_amplitude: np.ndarray = field(default_factory=vec3)
    h_rf_frequency: float = 0.0
    bead_field: Optional[np.ndarray] = None
    thermal_enabled: bool = False

    def __post_init__(self):
        if self.h_rf_frequency < 0:
            raise ValueError("h_rf_frequency must be non-negative")
        object.__setattr__(self, "h_static", np.asarray(self.h_static, dtype=float))
        object.__setattr__(self, "h_rf_amplitude", np.asarray(self.h_rf_amplitude, dtype=float))
        if self.bead_field is not None:
            object.__setattr__(self, "bead_field", np.asarray(self.bead_field, dtype=float))

    @property
    def constant_field(self) -> np.ndarray:
        h = self.h_static.copy()
        if self.bead_field is not None:
            h = h + self.bead_field
        return h


@dataclass(frozen=True)
class SimState:
    m: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if abs(np.linalg.norm(m) - 1.0) > 1e-9:
            m = normalize(m)
        object.__setattr__(self, "m", m)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-12
    scheme: str = "rk4"  # "rk4" (deterministic) or "heun" (stochastic)
    renormalize_every_step: bool = True
    seed: int = 0
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("rk4", "heun"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class Trajectory:
    t: np.ndarray
    m: np.ndarray  # (N, 3)
    current: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def __len__(self):
        return len(self.t)


def default_initial_state(params: MagnetParams) -> SimState:
    """Easy axis tilted by 1 degree towards +x."""
    e = params.easy_axis
    x = vec3(1.0, 0.0, 0.0)
    perp = x - np.dot(x, e) * e
    if np.linalg.norm(perp) < 1e-12:
        perp = vec3(0.0, 1.0, 0.0) - e[1] * e
    perp = normalize(perp)
    a = math.radians(1.0)
    return SimState(math.cos(a) * e + math.sin(a) * perp, 0.0)


def pack_parameters(params: MagnetParams, sources: FieldSources, drive: DriveCurrent) -> np.ndarray:
    p = np.zeros(_kernel.N_PARAMS)
    p[_kernel.GAMMA] = params.gamma
    p[_kernel.ALPHA] = params.alpha
    p[_kernel.HK] = params.anisotropy_field
    p[_kernel.EASY:_kernel.EASY + 3] = params.easy_axis
    p[_kernel.H_CONST:_kernel.H_CONST + 3] = sources.constant_field
    p[_kernel.H_RF:_kernel.H_RF + 3] = sources.h_rf_amplitude
    p[_kernel.F_HRF] = sources.h_rf_frequency
    p[_kernel.STT_PER_AMP] = params.stt_prefactor / params.geometry.area
    p[_kernel.MP:_kernel.MP + 3] = params.m_p
    p[_kernel.I_DC] = drive.i_dc
    p[_kernel.I_RF] = drive.i_rf
    p[_kernel.F_RF] = drive.f_rf
    p[_kernel.PHASE] = drive.phase
    return p


def effective_field(state: SimState, params: MagnetParams, sources: FieldSources, t: Optional[float] = None) -> np.ndarray:
    """Anisotropy + static + RF + bead field, A/m. The thermal term is added by the stepper."""
    t = state.t if t is None else t
    e = params.easy_axis
    h = params.anisotropy_field * np.dot(state.m, e) * e
    h = h + sources.constant_field
    h = h + sources.h_rf_amplitude * math.cos(2.0 * math.pi * sources.h_rf_frequency * t)
    return h


def stt_torque(m, j: float, params: MagnetParams) -> np.ndarray:
    """Slonczewski torque a_J m x (m_p x m), s^-1, in the Gilbert-form equation."""
    m = np.asarray(m, dtype=float)
    return params.stt_prefactor * j * np.cross(m, np.cross(params.m_p, m))


def thermal_sigma(params: MagnetParams, dt: float) -> float:
    """Per-component standard deviation of the Brown fluctuation field, A/m."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if params.temperature <= 0:
        return 0.0
    var = 2.0 * params.alpha * KB * params.temperature / (params.gamma * MU0 * params.ms_free * params.volume * dt)
    return math.sqrt(var)


def thermal_field(params: MagnetParams, dt: float, rng: np.random.Generator) -> np.ndarray:
    return thermal_sigma(params, dt) * rng.standard_normal(3)


def make_rng(seed: int, *counter: int) -> np.random.Generator:
    """Counter-based stream: replica k of master seed s is Philox(SeedSequence(s, spawn_key=(k,)))."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(c) for c in counter))
    return np.random.Generator(np.random.Philox(ss))


def llgs_rhs(m, t, params: MagnetParams, sources: FieldSources, drive: DriveCurrent, h_thermal=None) -> np.ndarray:
    """dm/dt in explicit form (NumPy reference path)."""
    m = np.asarray(m, dtype=float)
    h = effective_field(SimState(m, t), params, sources, t)
    if h_thermal is not None:
        h = h + h_thermal
    a = params.alpha
    g = params.gamma
    aj = params.stt_prefactor * float(drive.current(t)) / params.geometry.area
    mxh = np.cross(m, h)
    mpxm = np.cross(params.m_p, m)
    out = -g * mxh - a * g * np.cross(m, mxh) + aj * np.cross(m, mpxm) - a * aj * mpxm
    return out / (1.0 + a * a)


def energy(m, params: MagnetParams, h_static) -> float:
    """Zeeman + uniaxial energy, J."""
    m = np.asarray(m, dtype=float)
    zeeman = -MU0 * params.ms_free * params.volume * (m @ np.asarray(h_static))
    return zeeman - params.e_barrier * (m @ params.easy_axis) ** 2


def _check_setup(sources: FieldSources, config: IntegratorConfig):
    if sources.thermal_enabled and config.scheme != "heun":
        raise ValueError("thermal noise requires the 'heun' scheme")


def _noise_block(rng, sigma, n):
    return sigma * rng.standard_normal((n, 3))


def step(state: SimState, params: MagnetParams, sources: FieldSources, drive: DriveCurrent,
         config: IntegratorConfig, rng: Optional[np.random.Generator] = None) -> SimState:
    """Advance one time step."""
    _check_setup(sources, config)
    p = pack_parameters(params, sources, drive)
    m = state.m.copy()
    scheme = _kernel.HEUN if config.scheme == "heun" else _kernel.RK4
    noise = np.zeros((1, 3))
    if scheme == _kernel.HEUN and sources.thermal_enabled:
        if rng is None:
            rng = make_rng(config.seed)
        noise = _noise_block(rng, thermal_sigma(params, config.dt), 1)
    # t0 carries the absolute time so that i0 = 0 here.
    status, _, _ = _kernel.integrate(m, state.t, 0, config.dt, 1, p, noise, scheme,
                                     config.renormalize_every_step, 1 << 62, np.empty((0, 3)), 0)
    if status != _kernel.OK:
        raise IntegrationError(state.t, state.m)
    return SimState(m, state.t + config.dt)


def step_count(duration: float, dt: float) -> int:
    return int(math.floor(duration / dt * (1.0 + 1e-12)))


def simulate(initial: SimState, params: MagnetParams, sources: FieldSources, drive: DriveCurrent,
             config: IntegratorConfig, duration: float, rng: Optional[np.random.Generator] = None) -> Trajectory:
    """Integrate for ``duration`` seconds and record m and i(t) on the uniform grid."""
    if duration < config.dt * (1.0 - 1e-12):
        raise ValueError("duration must be at least one time step")
    _check_setup(sources, config)
    n = step_count(duration, config.dt)
    every = config.record_every
    f_expected = params.gamma * np.linalg.norm(sources.constant_field) / (2 * math.pi)
    if f_expected > 0 and config.dt > 1.0 / (50.0 * f_expected):
        warnings.warn(f"dt={config.dt:g} s gives fewer than 50 steps per expected period", stacklevel=2)

    p = pack_parameters(params, sources, drive)
    scheme = _kernel.HEUN if config.scheme == "heun" else _kernel.RK4
    noisy = scheme == _kernel.HEUN and sources.thermal_enabled
    if noisy and rng is None:
        rng = make_rng(config.seed)
    sigma = thermal_sigma(params, config.dt) if noisy else 0.0

    rows = n // every + 1
    out = np.empty((rows, 3))
    out[0] = initial.m
    m = initial.m.copy()
    row = 1
    zeros = np.zeros((NOISE_BLOCK, 3))
    done = 0
    while done < n:
        k = min(NOISE_BLOCK, n - done)
        noise = _noise_block(rng, sigma, k) if noisy else zeros
        status, bad, row = _kernel.integrate(m, initial.t, done, config.dt, k, p, noise, scheme,
                                             config.renormalize_every_step, every, out, row)
        if status != _kernel.OK:
            raise IntegrationError(initial.t + bad * config.dt, m.copy())
        done += k
    t = initial.t + np.arange(rows) * (every * config.dt)
    return Trajectory(t=t, m=out, current=drive.current(t))
