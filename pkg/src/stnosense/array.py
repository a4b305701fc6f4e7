"""Frequency-division multiplexed oscillator array.

Channel planning on a quantized bias grid, weighted-sum mixing, feedback
bias calibration against Ms / damping drift, array simulation and
time-division scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .bead import BeadParams, QuadratureConfig, bead_field_at_sensor
from .dynamics import (DriveCurrent, FieldSources, IntegratorConfig, MagnetParams, default_initial_state,
                       make_rng, simulate, step_count)
from .metrics import TRIM_FRACTION, default_lock_tolerance, dominant_frequency, trim
from .mtj import ResistancePair, voltage_series
from .readout import NoOscillationError

BIAS_RESOLUTION = 10e-6
MARGIN = 0.1e9
F_START = 10.0e9
I_RF_LOCK = 60e-6
GRID_ATOL = 1e-12  # relative tolerance on grid membership


class PlanningError(ValueError):
    def __init__(self, message: str, channel: Optional[int] = None):
        super().__init__(message if channel is None else f"channel {channel}: {message}")
        self.channel = channel


class CalibrationError(RuntimeError):
    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = list(trace)


class ChannelError(RuntimeError):
    def __init__(self, channel: int, cause: Exception):
        super().__init__(f"channel {channel}: {cause}")
        self.channel = channel
        self.cause = cause


def on_grid(value: float, resolution: float) -> bool:
    q = value / resolution
    return abs(q - round(q)) <= GRID_ATOL * max(1.0, abs(q))


def quantize(value: float, resolution: float) -> float:
    return round(value / resolution) * resolution


@dataclass(frozen=True)
class Channel:
    index: int
    f_target: float
    i_dc: float
    i_rf: float
    f_inj: float


@dataclass(frozen=True)
class ChannelPlan:
    channels: tuple
    margin: float = MARGIN
    resolution: float = BIAS_RESOLUTION

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.channels:
            raise PlanningError("a plan needs at least one channel")
        if not self.margin > 0 or not self.resolution > 0:
            raise PlanningError("margin and bias resolution must be positive")
        f = np.sort([c.f_target for c in self.channels])
        if len(f) > 1 and np.min(np.diff(f)) < self.margin * (1 - 1e-9):
            raise PlanningError("adjacent target frequencies closer than the margin")
        for c in self.channels:
            if not on_grid(c.i_dc, self.resolution):
                raise PlanningError(f"bias {c.i_dc:g} A is off the {self.resolution:g} A grid", c.index)

    def __len__(self):
        return len(self.channels)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([c.f_target for c in self.channels])

    @property
    def capacity(self) -> int:
        return len(self.channels)


@dataclass(frozen=True)
class CouplingModel:
    coefficients: tuple

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 1 or len(c) == 0 or np.any(c < 0) or not np.any(c > 0):
            raise ValueError("coupling coefficients must be >= 0 with at least one positive")
        object.__setattr__(self, "coefficients", tuple(float(x) for x in c))

    @classmethod
    def uniform(cls, n: int) -> "CouplingModel":
        return cls((1.0 / n,) * n)


@dataclass(frozen=True)
class TdmSchedule:
    slots: tuple
    slot_duration: float

    @property
    def total_time(self) -> float:
        return len(self.slots) * self.slot_duration


@dataclass(frozen=True)
class DriftScenario:
    """Per-channel multiplicative factors on free-layer Ms and damping."""

    ms_factors: tuple
    alpha_factors: tuple

    def __post_init__(self):
        ms = tuple(float(x) for x in self.ms_factors)
        al = tuple(float(x) for x in self.alpha_factors)
        if len(ms) != len(al):
            raise ValueError("ms and alpha factor lists differ in length")
        if any(x <= 0 for x in ms + al):
            raise ValueError("drift factors must be positive")
        object.__setattr__(self, "ms_factors", ms)
        object.__setattr__(self, "alpha_factors", al)

    @classmethod
    def none(cls, n: int) -> "DriftScenario":
        return cls((1.0,) * n, (1.0,) * n)

    @property
    def is_identity(self) -> bool:
        return all(x == 1.0 for x in self.ms_factors + self.alpha_factors)

    def apply(self, params: MagnetParams, k: int) -> MagnetParams:
        return replace(params, ms_free=params.ms_free * self.ms_factors[k],
                       alpha=params.alpha * self.alpha_factors[k])


@dataclass(frozen=True)
class BiasCurve:
    """Free-running frequency tabulated against DC bias."""

    currents: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        i = np.asarray(self.currents, dtype=float)
        f = np.asarray(self.frequencies, dtype=float)
        if i.shape != f.shape or len(i) < 2:
            raise PlanningError("bias curve needs at least two matching points")
        if not np.all(np.isfinite(f)):
            raise PlanningError("bias curve contains points without oscillation")
        df = np.diff(f)
        if not (np.all(df > 0) or np.all(df < 0)) or not np.all(np.diff(i) > 0):
            raise PlanningError("bias curve is not monotone")
        object.__setattr__(self, "currents", i)
        object.__setattr__(self, "frequencies", f)

    @property
    def span(self) -> float:
        return float(abs(self.frequencies[-1] - self.frequencies[0]))

    def bias_for(self, f: float) -> float:
        fs, cs = self.frequencies, self.currents
        if fs[0] > fs[-1]:
            fs, cs = fs[::-1], cs[::-1]
        if not fs[0] <= f <= fs[-1]:
            raise ValueError(f"{f:.4g} Hz outside [{fs[0]:.4g}, {fs[-1]:.4g}] Hz")
        return float(np.interp(f, fs, cs))


@dataclass(frozen=True)
class Oscillator:
    """Everything needed to run one channel apart from its bias."""

    params: MagnetParams = field(default_factory=MagnetParams)
    sources: FieldSources = field(default_factory=FieldSources)
    config: IntegratorConfig = field(default_factory=IntegratorConfig)
    i_rf: float = 0.0
    f_inj: Optional[float] = None
    duration: float = 200e-9
    trim_fraction: float = TRIM_FRACTION

    def measure(self, i_dc: float, f_inj: Optional[float] = None, rng=None):
        """m_z dominant frequency (Hz) and the raw bin width used for lock checks."""
        f_inj = self.f_inj if f_inj is None else f_inj
        drive = DriveCurrent(i_dc, self.i_rf if f_inj else 0.0, f_inj or 0.0)
        traj = simulate(default_initial_state(self.params), self.params, self.sources, drive, self.config,
                        self.duration, rng)
        z = trim(traj.m[:, 2], self.trim_fraction)
        return dominant_frequency(z, traj.dt, min_amplitude=1e-3), default_lock_tolerance(len(z), traj.dt)


def measure_bias_curve(osc: Oscillator, currents: Sequence[float]) -> BiasCurve:
    """Free-running frequency at each bias (injection off)."""
    free = replace(osc, i_rf=0.0, f_inj=None)
    freqs = []
    for i in currents:
        try:
            freqs.append(free.measure(float(i))[0])
        except NoOscillationError:
            freqs.append(float("nan"))
    return BiasCurve(np.asarray(currents, dtype=float), np.asarray(freqs))


def plan_channels(n: int, f_start: float, margin: float, bias_curve: BiasCurve,
                  resolution: float = BIAS_RESOLUTION, i_rf: float = I_RF_LOCK) -> ChannelPlan:
    """Targets f_start + k margin; biases from the inverted curve, rounded to the grid."""
    if n < 1:
        raise PlanningError("n must be >= 1")
    if not margin > 0:
        raise PlanningError("margin must be positive")
    if n > 1 and margin > bias_curve.span / (n - 1):
        raise PlanningError(f"{n} channels at {margin:g} Hz spacing exceed the bias-curve span {bias_curve.span:g} Hz")
    channels = []
    for k in range(n):
        f = f_start + k * margin
        try:
            i = bias_curve.bias_for(f)
        except ValueError as exc:
            raise PlanningError(str(exc), k) from None
        channels.append(Channel(k, f, quantize(i, resolution), i_rf, f))
    return ChannelPlan(tuple(channels), margin, resolution)


def mix(signals, coupling: CouplingModel) -> np.ndarray:
    """Pointwise weighted sum of equally sampled channel series."""
    lengths = {len(s) for s in signals}
    if len(lengths) != 1:
        raise ValueError("channel series differ in length")
    if len(signals) != len(coupling.coefficients):
        raise ValueError("coupling has a different channel count")
    return np.asarray(coupling.coefficients) @ np.asarray(signals, dtype=float)


@dataclass
class CalibrationResult:
    i_dc: float
    frequency: float
    iterations: int
    trace: list


def calibrate_bias(osc: Oscillator, f_target: float, margin: float = MARGIN, step: float = BIAS_RESOLUTION,
                   max_iter: int = 20, i_start: Optional[float] = None, i_min: float = 0.0,
                   i_max: float = 1e-3) -> CalibrationResult:
    """Step the bias one grid step at a time towards the target frequency.

    Injection (if configured) runs at ``f_target``. The step direction comes
    from the measured local slope df/di; the loop stops once the measured
    frequency is within margin/2.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    trace = []
    cache = {}

    def freq(i):
        key = round(i / step)
        if key not in cache:
            try:
                cache[key] = osc.measure(key * step, f_target)[0]
            except NoOscillationError:
                cache[key] = float("nan")
            trace.append((key * step, cache[key]))
        return cache[key]

    i = quantize(200e-6 if i_start is None else i_start, step)
    for it in range(1, max_iter + 1):
        f = freq(i)
        if not math.isfinite(f):
            raise CalibrationError(f"no oscillation at {i:g} A", trace)
        err = f - f_target
        if abs(err) <= 0.5 * margin:
            return CalibrationResult(i, f, it, trace)
        up, down = freq(i + step), freq(i - step)
        if not (math.isfinite(up) and math.isfinite(down)):
            raise CalibrationError(f"oscillation lost next to {i:g} A", trace)
        slope = (up - down) / (2 * step)
        if slope == 0.0 or (up - f) * (f - down) < 0:
            raise CalibrationError(f"non-monotone frequency response at {i:g} A", trace)
        nxt = quantize(i - math.copysign(step, err / slope), step)
        if not i_min <= nxt <= i_max:
            raise CalibrationError(f"target {f_target:g} Hz unreachable within bias limits", trace)
        if abs(freq(nxt) - f_target) > abs(err):
            raise CalibrationError(f"step from {i:g} A moved away from the target", trace)
        i = nxt
    raise CalibrationError(f"no convergence after {max_iter} iterations", trace)


def exhaustive_bias_scan(osc: Oscillator, f_target: float, currents: Sequence[float]):
    """Measured frequency at every grid bias; returns (currents, freqs)."""
    freqs = []
    for i in currents:
        try:
            freqs.append(osc.measure(float(i), f_target)[0])
        except NoOscillationError:
            freqs.append(float("nan"))
    return np.asarray(currents, dtype=float), np.asarray(freqs)


@dataclass
class ChannelTruth:
    index: int
    f_target: float
    i_dc: float
    bead: bool
    frequency: float
    locked: bool
    calibrated: bool
    error: Optional[str] = None


@dataclass
class ArrayRun:
    t: np.ndarray
    mixed: np.ndarray
    signals: np.ndarray
    truth: list
    plan: ChannelPlan

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass(frozen=True)
class ArrayDevice:
    params: MagnetParams = field(default_factory=MagnetParams)
    sources: FieldSources = field(default_factory=FieldSources)
    config: IntegratorConfig = field(default_factory=IntegratorConfig)
    pair: ResistancePair = field(default_factory=ResistancePair)
    bead: BeadParams = field(default_factory=BeadParams)
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    settle: float = 50e-9
    coupling: Optional[CouplingModel] = None


def channel_voltage(device: ArrayDevice, params: MagnetParams, ch: Channel, i_dc: float, bead: bool,
                    duration: float, rng=None):
    """Settled voltage record and m_z frequency for one channel."""
    sources = device.sources
    if bead:
        hb = bead_field_at_sensor(device.bead, params, sources.h_static, device.quad)
        sources = replace(sources, bead_field=hb)
    drive = DriveCurrent(i_dc, ch.i_rf, ch.f_inj)
    traj = simulate(default_initial_state(params), params, sources, drive, device.config,
                    device.settle + duration, rng)
    keep = step_count(duration, device.config.dt) // device.config.record_every
    traj.t, traj.m, traj.current = traj.t[-keep:], traj.m[-keep:], traj.current[-keep:]
    v = voltage_series(traj, params.m_p, device.pair)
    f = dominant_frequency(traj.m[:, 2], traj.dt, min_amplitude=1e-3)
    return traj.t, v, f


def run_array(plan: ChannelPlan, drift: Optional[DriftScenario] = None, beads: Optional[Sequence[bool]] = None,
              duration: float = 100e-9, seed: int = 0, device: ArrayDevice = ArrayDevice(),
              stream: tuple = ()) -> ArrayRun:
    """Simulate every channel independently, calibrating under drift, then mix.

    Noise for channel k comes from the counter-based stream (seed, *stream, k),
    so distinct ``stream`` keys give independent replicas of the same array.
    """
    n = len(plan)
    beads = [False] * n if beads is None else list(beads)
    if len(beads) != n:
        raise ValueError("bead flags must match the channel count")
    drift = DriftScenario.none(n) if drift is None else drift
    if len(drift.ms_factors) != n:
        raise ValueError("drift scenario must match the channel count")
    coupling = device.coupling or CouplingModel.uniform(n)
    noisy = device.sources.thermal_enabled
    signals, truth, t = [], [], None
    for k, ch in enumerate(plan.channels):
        params = drift.apply(device.params, k)
        try:
            i_dc, calibrated = ch.i_dc, False
            if drift.ms_factors[k] != 1.0 or drift.alpha_factors[k] != 1.0:
                osc = Oscillator(params, replace(device.sources, thermal_enabled=False),
                                 replace(device.config, scheme="rk4"), ch.i_rf, ch.f_inj)
                i_dc = calibrate_bias(osc, ch.f_target, plan.margin, plan.resolution, i_start=ch.i_dc).i_dc
                calibrated = True
            rng = make_rng(seed, *stream, k) if noisy else None
            t, v, f = channel_voltage(device, params, ch, i_dc, beads[k], duration, rng)
        except (NoOscillationError, CalibrationError, ValueError, RuntimeError) as exc:
            raise ChannelError(k, exc) from exc
        tol = default_lock_tolerance(len(v), float(t[1] - t[0]))
        signals.append(v)
        truth.append(ChannelTruth(k, ch.f_target, i_dc, bool(beads[k]), f, abs(f - ch.f_inj) <= tol, calibrated))
    signals = np.asarray(signals)
    return ArrayRun(t - t[0], mix(signals, coupling), signals, truth, plan)


def schedule_tdm(total: int, per_slot: int, slot_duration: float) -> TdmSchedule:
    """Round-robin partition of sensors into FDM slots."""
    if total < 1 or per_slot < 1:
        raise ValueError("counts must be >= 1")
    n_slots = math.ceil(total / per_slot)
    slots = tuple(tuple(range(s * per_slot, min(total, (s + 1) * per_slot))) for s in range(n_slots))
    return TdmSchedule(slots, slot_duration)
