"""Frequency, amplitude and injection-locking analysis of oscillator output."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .readout import NoOscillationError, band_amplitude, refine_peak, spectrum

MIN_SAMPLES = 1024
TRIM_FRACTION = 0.25
PAD_LIMIT = 1 << 20  # longer records are already finely binned; padding only costs memory


def trim(series, fraction: float = TRIM_FRACTION) -> np.ndarray:
    """Drop the leading transient."""
    x = np.asarray(series)
    return x[int(len(x) * fraction):]


def _main_peak(series, dt, min_amplitude, snr, window="hann", zero_pad_factor=4):
    x = np.asarray(series, dtype=float)
    if len(x) < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {len(x)}")
    if len(x) > PAD_LIMIT:
        zero_pad_factor = 1
    est = spectrum(x, dt, window, zero_pad_factor)
    amp = est.amplitudes
    # Skip the DC main lobe: raw bins 0..1 map to the first 2*pad padded bins.
    start = 2 * zero_pad_factor
    if len(amp) <= start + 2:
        raise NoOscillationError("series too short to resolve any oscillation")
    k = start + int(np.argmax(amp[start:]))
    peak = amp[k]
    floor = float(np.median(amp[start:]))
    roundoff = 1e-9 * float(np.max(np.abs(x)))  # residue left by mean removal
    if not peak > roundoff or peak < min_amplitude or peak < snr * floor:
        raise NoOscillationError(f"no spectral peak above the noise floor (peak {peak:.3e}, floor {floor:.3e})")
    f, a = refine_peak(est, k)
    return est, f, a


def dominant_frequency(series, dt: float, min_amplitude: float = 0.0, snr: float = 10.0) -> float:
    """Frequency of the largest non-DC spectral peak, sub-bin interpolated."""
    return _main_peak(series, dt, min_amplitude, snr)[1]


def steady_amplitude(series, dt: float, method: str = "peak", halfwidth: Optional[float] = None,
                     min_amplitude: float = 0.0, snr: float = 10.0) -> float:
    """Oscillation amplitude at the dominant frequency.

    ``peak`` reads the interpolated Hann peak; ``band`` integrates spectral
    power within +-halfwidth of the peak (default 5% of the frequency), which
    stays stable when thermal phase diffusion smears the line.
    """
    est, f, a = _main_peak(series, dt, min_amplitude, snr)
    if method == "peak":
        return a
    if method == "band":
        hw = 0.05 * f if halfwidth is None else halfwidth
        return band_amplitude(est, max(f - hw, est.bin_width), f + hw)
    raise ValueError(f"unknown amplitude method {method!r}")


def default_lock_tolerance(n_samples: int, dt: float) -> float:
    """One raw FFT bin of the analysed record."""
    return 1.0 / (n_samples * dt)


def is_locked(series, dt: float, f_inj: float, tolerance: Optional[float] = None, **kw) -> bool:
    tol = default_lock_tolerance(len(series), dt) if tolerance is None else tolerance
    return abs(dominant_frequency(series, dt, **kw) - f_inj) <= tol


def sensitivity(a0: float, a_bead: float) -> float:
    """Relative amplitude change |A_bead - A0| / A0."""
    if a0 <= 0:
        raise ValueError("baseline amplitude must be positive")
    return abs(a_bead - a0) / a0


@dataclass
class OscillationSummary:
    frequency: float
    amplitude: float
    locked: bool = False
    lock_target: Optional[float] = None


def summarize(series, dt: float, f_inj: Optional[float] = None, tolerance: Optional[float] = None,
              **kw) -> OscillationSummary:
    f = dominant_frequency(series, dt, **kw)
    a = steady_amplitude(series, dt, **kw)
    locked = False
    if f_inj is not None:
        tol = default_lock_tolerance(len(series), dt) if tolerance is None else tolerance
        locked = abs(f - f_inj) <= tol
    return OscillationSummary(f, a, locked, f_inj)


@dataclass(frozen=True)
class LockScan:
    """Detuning scan around the free-running frequency."""

    span: float = 0.6e9  # scanned half-width, Hz
    step: float = 0.025e9
    duration: float = 60e-9
    trim_fraction: float = TRIM_FRACTION


@dataclass
class LockingRange:
    low: Optional[float]
    high: Optional[float]
    free_running: float
    scanned: np.ndarray
    locked: np.ndarray

    @property
    def width(self) -> float:
        return 0.0 if self.low is None else self.high - self.low

    @property
    def empty(self) -> bool:
        return self.low is None


def _mz_frequency(params, sources, drive, config, duration, trim_fraction):
    from .dynamics import default_initial_state, simulate

    traj = simulate(default_initial_state(params), params, sources, drive, config, duration)
    z = trim(traj.m[:, 2], trim_fraction)
    return dominant_frequency(z, traj.dt * 1.0, min_amplitude=1e-3), len(z), traj.dt


def locking_range(params, sources, i_dc: float, i_rf: float, scan: LockScan = LockScan(),
                  config=None) -> LockingRange:
    """Largest contiguous band of injection frequencies that lock m_z.

    The scan is centred on the free-running frequency at ``i_dc`` and walks
    outwards in both directions until the first unlocked point.
    """
    from .dynamics import DriveCurrent, IntegratorConfig

    config = config or IntegratorConfig()
    f0, n, dt = _mz_frequency(params, sources, DriveCurrent(i_dc), config, scan.duration, scan.trim_fraction)
    tol = default_lock_tolerance(n, dt)
    offsets = np.arange(-scan.span, scan.span + 0.5 * scan.step, scan.step)
    freqs = f0 + offsets
    locked = np.zeros(len(freqs), dtype=bool)
    if i_rf <= 0:
        return LockingRange(None, None, f0, freqs, locked)

    def check(f):
        drive = DriveCurrent(i_dc, i_rf, f)
        try:
            got, _, _ = _mz_frequency(params, sources, drive, config, scan.duration, scan.trim_fraction)
        except NoOscillationError:
            return False
        return abs(got - f) <= tol

    centre = int(np.argmin(np.abs(offsets)))
    if not check(freqs[centre]):
        return LockingRange(None, None, f0, freqs, locked)
    locked[centre] = True
    lo = hi = centre
    while lo - 1 >= 0 and check(freqs[lo - 1]):
        lo -= 1
        locked[lo] = True
    while hi + 1 < len(freqs) and check(freqs[hi + 1]):
        hi += 1
        locked[hi] = True
    return LockingRange(float(freqs[lo]), float(freqs[hi]), f0, freqs, locked)
