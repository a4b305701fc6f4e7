"""Experiment runners and deterministic result persistence."""

from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import __version__
from .array import (ArrayDevice, BiasCurve, Oscillator, calibrate_bias, exhaustive_bias_scan, measure_bias_curve,
                    plan_channels, quantize, run_array)
from .bead import BeadParams, bead_field_at_sensor
from .config import ExperimentConfig
from .dynamics import (DriveCurrent, IntegratorConfig, default_initial_state, make_rng, simulate)
from .metrics import (LockScan, default_lock_tolerance, dominant_frequency, locking_range, steady_amplitude, trim)
from .mtj import voltage_series
from .readout import NoOscillationError, channel_amplitudes, detect, noise_floor_threshold, spectrum

SCHEMA_VERSION = 1


class ExperimentError(RuntimeError):
    pass


@dataclass
class RunRecord:
    run_id: str
    config: dict
    seed: int
    files: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    status: str = "ok"
    directory: str = ""

    def as_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "package_version": __version__, "run_id": self.run_id,
                "seed": self.seed, "status": self.status, "config": self.config, "files": self.files,
                "summary": self.summary}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


class RunWriter:
    """Writes CSV tables and the summary document, tracking a hash manifest."""

    def __init__(self, directory: str):
        self.directory = directory
        self.files: dict = {}

    def _write(self, name: str, text: str):
        os.makedirs(self.directory, exist_ok=True)
        data = text.encode("utf-8")
        with open(os.path.join(self.directory, name), "wb") as fh:
            fh.write(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name: str, columns, units, rows):
        """Three header lines: schema comment, column names, SI units."""
        lines = [f"# schema_version={SCHEMA_VERSION}", ",".join(columns), ",".join(units)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        self._write(name, "\n".join(lines) + "\n")

    def summary(self, record: RunRecord):
        record.files = dict(sorted(self.files.items()))
        self._write("summary.json", json.dumps(_clean(record.as_dict()), indent=2, sort_keys=True) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return None if not math.isfinite(f) else f
    return obj


def read_csv(path):
    """Load a result table: (column names, units, float array); text columns read as NaN."""
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        names = fh.readline().strip().split(",")
        units = fh.readline().strip().split(",")
        rows = [[math.nan if u == "text" or x == "" else float(x) for x, u in zip(line.rstrip("\n").split(","), units)]
                for line in fh if line.strip()]
    return names, units, np.array(rows, dtype=float).reshape(-1, len(names))


def run_id_for(cfg: ExperimentConfig) -> str:
    ident = {k: v for k, v in cfg.resolved.items() if k != "output"}
    blob = json.dumps(_clean(ident), sort_keys=True).encode()
    return f"{cfg.kind}-seed{cfg.seed}-{hashlib.sha256(blob).hexdigest()[:10]}"


# -- shared helpers -----------------------------------------------------------

def _det(cfg: ExperimentConfig) -> IntegratorConfig:
    return replace(cfg.integrator, scheme="rk4")


def _bead_sources(cfg, params, sources, bead: Optional[BeadParams]):
    if bead is None:
        return sources
    return replace(sources, bead_field=bead_field_at_sensor(bead, params, sources.h_static, cfg.quad))


def _trajectory(cfg, params, sources, drive, duration=None, rng=None, integrator=None):
    integrator = integrator or (cfg.integrator if sources.thermal_enabled else _det(cfg))
    if integrator.scheme == "heun" and rng is None:
        rng = make_rng(cfg.seed)
    return simulate(default_initial_state(params), params, sources, drive, integrator,
                    duration or cfg.duration, rng)


def _mz(cfg, traj):
    return trim(traj.m[:, 2], cfg.trim_fraction)


def _free_running(cfg, params, sources, i_dc) -> float:
    """Deterministic free-running m_z frequency, used to place the injection tone."""
    quiet = replace(sources, thermal_enabled=False)
    traj = _trajectory(cfg, params, quiet, DriveCurrent(i_dc), integrator=_det(cfg))
    return dominant_frequency(_mz(cfg, traj), traj.dt, min_amplitude=1e-3)


def resolve_rf_field(cfg):
    """Sources with an 'auto' RF-field frequency tied to the injection tone at the drive bias."""
    if not cfg.auto_h_rf_frequency:
        return cfg.sources
    f_inj = _free_running(cfg, cfg.params, replace(cfg.sources, h_rf_amplitude=np.zeros(3)), cfg.drive.i_dc)
    return replace(cfg.sources, h_rf_frequency=f_inj + cfg.detuning)


def _injection(cfg, params, sources, i_dc, i_rf) -> float:
    if i_rf <= 0:
        return 0.0
    if not cfg.auto_f_rf:
        return cfg.drive.f_rf
    return _free_running(cfg, params, sources, i_dc) + cfg.detuning


def _amplitude(cfg, series, dt):
    o = cfg.options
    return steady_amplitude(series, dt, method=o["amplitude_method"], halfwidth=o["band_halfwidth"],
                            min_amplitude=1e-3)


def _guard(fn: Callable, n_nan: int):
    """Run one sweep point; failures become NaN rows with a status string."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return list(fn()), "ok"
    except (NoOscillationError, ValueError, RuntimeError, ArithmeticError) as exc:
        return [math.nan] * n_nan, f"error: {type(exc).__name__}: {exc}".replace(",", ";")


def apply_axis(cfg: ExperimentConfig, symbol: str, value: float):
    """Return (params, sources, drive, bead) with one swept quantity replaced."""
    p, s, d, b = cfg.params, cfg.sources, cfg.drive, cfg.bead
    if symbol == "i_dc":
        d = replace(d, i_dc=value)
    elif symbol == "i_rf":
        d = replace(d, i_rf=value)
    elif symbol == "f_rf":
        d = replace(d, f_rf=value)
    elif symbol == "h_static":
        s = replace(s, h_static=value * s.h_static / np.linalg.norm(s.h_static))
    elif symbol == "h_rf":
        n = np.linalg.norm(s.h_rf_amplitude)
        direction = s.h_rf_amplitude / n if n > 0 else np.array([1.0, 0.0, 0.0])
        s = replace(s, h_rf_amplitude=value * direction)
    elif symbol in ("e_barrier", "alpha", "ms_free", "polarization", "temperature"):
        p = replace(p, **{symbol: value})
    elif symbol == "ms_factor":
        p = replace(p, ms_free=p.ms_free * value)
    elif symbol == "t_free":
        p = replace(p, geometry=replace(p.geometry, t_free=value))
    elif symbol == "area":
        p = replace(p, geometry=p.geometry.with_area(value))
    elif symbol in ("bead_height", "bead_radius"):
        b = b or BeadParams()
        if symbol == "bead_height":
            b = replace(b, position=np.array([0.0, 0.0, value]))
        else:
            b = replace(b, radius=value)
    else:
        raise ExperimentError(f"unknown sweep axis {symbol!r}")
    return p, s, d, b


# -- experiment kinds ---------------------------------------------------------

def _single_run(cfg, w: RunWriter) -> dict:
    p, s = cfg.params, _bead_sources(cfg, cfg.params, cfg.sources, cfg.bead)
    f_inj = _injection(cfg, p, cfg.sources, cfg.drive.i_dc, cfg.drive.i_rf)
    drive = replace(cfg.drive, f_rf=f_inj)
    traj = _trajectory(cfg, p, s, drive)
    v = voltage_series(traj, p.m_p, cfg.pair)
    w.csv("timeseries.csv", ["t", "m_x", "m_y", "m_z", "current", "voltage"], ["s", "1", "1", "1", "A", "V"],
          zip(traj.t, traj.m[:, 0], traj.m[:, 1], traj.m[:, 2], traj.current, v))
    z = _mz(cfg, traj)
    est = spectrum(z, traj.dt)
    w.csv("spectrum.csv", ["frequency", "amplitude"], ["Hz", "1"], zip(est.frequencies, est.amplitudes))
    out = {"norm_error_max": float(np.max(np.abs(np.linalg.norm(traj.m, axis=1) - 1.0)))}
    try:
        f = dominant_frequency(z, traj.dt, min_amplitude=1e-3)
        out.update(frequency=f, amplitude=_amplitude(cfg, z, traj.dt),
                   voltage_amplitude=steady_amplitude(trim(v, cfg.trim_fraction), traj.dt))
        if f_inj:
            out.update(f_inj=f_inj, locked=abs(f - f_inj) <= default_lock_tolerance(len(z), traj.dt))
    except NoOscillationError as exc:
        out["oscillation"] = f"none: {exc}"
    return out


def entrained(freqs, drive_f: float, tol: float, orders: int = 3) -> np.ndarray:
    """Points whose frequency sits on a drive harmonic or subharmonic."""
    freqs = np.asarray(freqs, dtype=float)
    if drive_f <= 0:
        return np.zeros(len(freqs), dtype=bool)
    tones = [drive_f * k for k in range(1, orders + 1)] + [drive_f / k for k in range(2, orders + 1)]
    return np.array([any(abs(f - t) <= tol for t in tones) if math.isfinite(f) else False for f in freqs])


def frequency_span(freqs, mask=None) -> float:
    f = np.asarray(freqs, dtype=float)
    keep = np.isfinite(f) if mask is None else np.isfinite(f) & ~mask
    return float(np.ptp(f[keep])) if keep.sum() >= 2 else 0.0


def is_monotone(values) -> bool:
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)) or len(v) < 2:
        return False
    d = np.diff(v)
    return bool(np.all(d > 0) or np.all(d < 0))


def _freq_vs_bias(cfg, w) -> dict:
    axis = cfg.sweep
    with_rf = np.linalg.norm(cfg.sources.h_rf_amplitude) > 0
    static = replace(cfg.sources, h_rf_amplitude=np.zeros(3), h_rf_frequency=0.0)
    rf_sources = resolve_rf_field(cfg) if with_rf else None
    configs = [("static", static)] + ([("rf", rf_sources)] if with_rf else [])
    results = {}
    tol = None
    for label, src in configs:
        rows = []
        for value in axis.values:
            def point(value=value, src=src):
                p, _, d, b = apply_axis(cfg, axis.symbol, value)
                s = _bead_sources(cfg, p, src, b)
                traj = _trajectory(cfg, p, s, replace(d, f_rf=d.f_rf if d.i_rf > 0 else 0.0))
                z = _mz(cfg, traj)
                return dominant_frequency(z, traj.dt, min_amplitude=1e-3), _amplitude(cfg, z, traj.dt)
            vals, status = _guard(point, 2)
            rows.append((value, *vals, status))
        results[label] = rows
        n = int(cfg.duration / cfg.integrator.dt * (1 - cfg.trim_fraction))
        tol = default_lock_tolerance(max(n, 1), cfg.integrator.dt)

    units_axis = _axis_unit(axis.symbol)
    static_rows = results["static"]
    f_static = np.array([r[1] for r in static_rows])
    summary = {"axis": axis.symbol, "points": axis.points, "span_static": frequency_span(f_static),
               "monotone_static": is_monotone(f_static),
               "failed_points": sum(r[-1] != "ok" for r in static_rows)}
    if with_rf:
        rf_rows = results["rf"]
        f_rf = np.array([r[1] for r in rf_rows])
        mask = entrained(f_rf, rf_sources.h_rf_frequency, tol)
        span_rf = frequency_span(f_rf, mask)
        summary.update(h_rf_frequency=rf_sources.h_rf_frequency, span_rf=span_rf, span_rf_raw=frequency_span(f_rf), entrained_points=int(mask.sum()),
                       monotone_rf=is_monotone(f_rf[~mask]) if (~mask).sum() >= 2 else False,
                       rf_wider=bool(span_rf > summary["span_static"]))
        w.csv("sweep.csv", [axis.symbol, "frequency_static", "amplitude_static", "frequency_rf", "amplitude_rf",
                            "entrained_rf", "status_static", "status_rf"],
              [units_axis, "Hz", "1", "Hz", "1", "bool", "text", "text"],
              [(a[0], a[1], a[2], b[1], b[2], m, a[3], b[3]) for a, b, m in zip(static_rows, rf_rows, mask)])
    else:
        w.csv("sweep.csv", [axis.symbol, "frequency", "amplitude", "status"], [units_axis, "Hz", "1", "text"],
              static_rows)
    return summary


def _axis_unit(symbol: str) -> str:
    from .config import SWEEP_AXES
    return {"current": "A", "frequency": "Hz", "field": "A/m", "energy": "J", "length": "m", "float": "1",
            "magnetization": "A/m", "area": "m2", "temperature": "K"}[SWEEP_AXES[symbol]]


def _amp_vs_rf(cfg, w) -> dict:
    axis = cfg.sweep
    f0 = _free_running(cfg, cfg.params, cfg.sources, cfg.drive.i_dc)
    rows = []
    for value in axis.values:
        def point(value=value):
            p, s, d, b = apply_axis(cfg, axis.symbol, value)
            s = _bead_sources(cfg, p, s, b)
            f_inj = (f0 + cfg.detuning if cfg.auto_f_rf else cfg.drive.f_rf) if d.i_rf > 0 else 0.0
            traj = _trajectory(cfg, p, s, replace(d, f_rf=f_inj))
            z = _mz(cfg, traj)
            f = dominant_frequency(z, traj.dt, min_amplitude=1e-3)
            locked = bool(f_inj) and abs(f - f_inj) <= default_lock_tolerance(len(z), traj.dt)
            return _amplitude(cfg, z, traj.dt), f, f_inj, locked
        vals, status = _guard(point, 4)
        rows.append((value, *vals, status))
    w.csv("sweep.csv", [axis.symbol, "amplitude", "frequency", "f_inj", "locked", "status"],
          [_axis_unit(axis.symbol), "1", "Hz", "Hz", "bool", "text"], rows)
    return {"free_running": f0, "locked_points": int(sum(bool(r[4]) is True and r[5] == "ok" for r in rows)),
            "failed_points": sum(r[-1] != "ok" for r in rows)}


def _rising_bias_curve(osc, currents) -> BiasCurve:
    """Bias curve over the longest rising run of oscillating points."""
    freqs = []
    for i in currents:
        try:
            freqs.append(osc.measure(float(i))[0])
        except NoOscillationError:
            freqs.append(math.nan)
    best, start = (0, 0), None
    for k, f in enumerate(freqs):
        if not math.isfinite(f):
            start = None
            continue
        if start is None or not f > freqs[k - 1]:
            start = k
        if k + 1 - start > best[1] - best[0]:
            best = (start, k + 1)
    lo, hi = best
    return BiasCurve(np.asarray(currents[lo:hi], dtype=float), np.asarray(freqs[lo:hi]))


def _bias_vs_area(cfg, w) -> dict:
    axis, o = cfg.sweep, cfg.options
    base_area = cfg.params.geometry.area
    rows = []
    for value in axis.values:
        def point(value=value):
            p, s, _, _ = apply_axis(cfg, axis.symbol, value)
            scale = p.geometry.area / base_area
            # the anisotropy field moves with area too, so scan a wider density window
            currents = np.linspace(0.5 * o["bias_start"], 1.5 * o["bias_stop"], 2 * o["bias_points"]) * scale
            osc = Oscillator(p, replace(s, thermal_enabled=False), _det(cfg), duration=cfg.duration,
                             trim_fraction=cfg.trim_fraction)
            i = _rising_bias_curve(osc, currents).bias_for(o["f_target"])
            return i, i / p.geometry.area
        vals, status = _guard(point, 2)
        rows.append((value, *vals, status))
    w.csv("sweep.csv", [axis.symbol, "bias_current", "current_density", "status"],
          [_axis_unit(axis.symbol), "A", "A/m2", "text"], rows)
    return {"f_target": o["f_target"], "failed_points": sum(r[-1] != "ok" for r in rows)}


def _montecarlo(cfg, w) -> dict:
    o = cfg.options
    sources = replace(cfg.sources, thermal_enabled=True)
    integrator = replace(cfg.integrator, scheme="heun")
    rows = []
    for k in range(o["replicas"]):
        def point(k=k):
            traj = _trajectory(cfg, cfg.params, sources, cfg.drive, rng=make_rng(cfg.seed, k), integrator=integrator)
            z = _mz(cfg, traj)
            return dominant_frequency(z, traj.dt, min_amplitude=1e-3), _amplitude(cfg, z, traj.dt)
        vals, status = _guard(point, 2)
        rows.append((k, *vals, status))
    w.csv("replicas.csv", ["replica", "frequency", "amplitude", "status"], ["1", "Hz", "1", "text"], rows)
    f = np.array([r[1] for r in rows])
    f = f[np.isfinite(f)]
    out = {"replicas": o["replicas"], "valid": int(len(f)), "seed_scheme": "Philox(SeedSequence(seed, spawn_key=(k,)))"}
    if len(f) >= 2:
        counts, edges = np.histogram(f, bins=o["histogram_bins"])
        w.csv("histogram.csv", ["bin_low", "bin_high", "count"], ["Hz", "Hz", "1"],
              zip(edges[:-1], edges[1:], counts))
        std = float(np.std(f, ddof=1))
        out.update(mean=float(f.mean()), std=std, two_sigma=2 * std, margin=o["margin"],
                   within_margin=bool(2 * std <= o["margin"]),
                   discrepancy="" if 2 * std <= o["margin"] else
                   f"2 sigma = {2 * std / 1e9:.3f} GHz exceeds the {o['margin'] / 1e9:.3f} GHz channel margin")
    return out


def locked_amplitudes(cfg, params, sources, bead, i_dc, i_rf, rng_pair=(None, None)):
    """(a0, a_bead, frequency, f_inj, locked) for an injection-locked device."""
    f_inj = _injection(cfg, params, sources, i_dc, i_rf)
    drive = DriveCurrent(i_dc, i_rf, f_inj)
    out = []
    for b, rng in zip((None, bead), rng_pair):
        s = _bead_sources(cfg, params, sources, b)
        traj = _trajectory(cfg, params, s, drive, rng=rng)
        z = _mz(cfg, traj)
        out.append((_amplitude(cfg, z, traj.dt), dominant_frequency(z, traj.dt, min_amplitude=1e-3), len(z), traj.dt))
    (a0, f, n, dt), (a1, _, _, _) = out
    return a0, a1, f, f_inj, abs(f - f_inj) <= default_lock_tolerance(n, dt)


def _sensitivity_sweep(cfg, w) -> dict:
    axis, o = cfg.sweep, cfg.options
    rows = []
    for idx, value in enumerate(axis.values):
        def point(value=value, idx=idx):
            p, s, d, b = apply_axis(cfg, axis.symbol, value)
            i_rf = d.i_rf if d.i_rf > 0 else o["lock_current"]
            rngs = (make_rng(cfg.seed, idx, 0), make_rng(cfg.seed, idx, 1)) if s.thermal_enabled else (None, None)
            a0, a1, f, f_inj, locked = locked_amplitudes(cfg, p, s, b or BeadParams(temperature=p.temperature),
                                                         d.i_dc, i_rf, rngs)
            return a0, a1, abs(a1 - a0) / a0, f, locked
        vals, status = _guard(point, 5)
        rows.append((value, *vals, status))
    w.csv("sweep.csv", [axis.symbol, "amplitude_no_bead", "amplitude_bead", "sensitivity", "frequency", "locked",
                        "status"], [_axis_unit(axis.symbol), "1", "1", "1", "Hz", "bool", "text"], rows)
    sens = np.array([r[3] for r in rows])
    good = np.isfinite(sens)
    out = {"failed_points": int((~good).sum())}
    if good.any():
        k = int(np.nanargmax(sens))
        out.update(max_sensitivity=float(sens[k]), best_axis_value=float(axis.values[k]))
    return out


def _drift_calibration(cfg, w) -> dict:
    axis, o = cfg.sweep, cfg.options
    grid = np.arange(round(o["bias_start"] / o["resolution"]), round(o["bias_stop"] / o["resolution"]) + 1)
    grid = grid * o["resolution"]
    nominal = Oscillator(cfg.params, replace(cfg.sources, thermal_enabled=False), _det(cfg), o["lock_current"],
                         duration=o["lock_duration"], trim_fraction=cfg.trim_fraction)
    curve = measure_bias_curve(nominal, grid)
    i_start = quantize(curve.bias_for(o["f_target"]), o["resolution"])
    rows = []
    for value in axis.values:
        def point(value=value):
            p, s, _, _ = apply_axis(cfg, axis.symbol, value)
            p = replace(p, alpha=p.alpha * o["drift_alpha"])
            osc = replace(nominal, params=p, sources=replace(s, thermal_enabled=False))
            res = calibrate_bias(osc, o["f_target"], o["margin"], o["resolution"], o["max_iter"], i_start,
                                 grid[0], grid[-1])
            best, _ = oracle_best(osc, o["f_target"], grid)
            match = any(abs(res.i_dc - b) < 1e-12 for b in best)
            return res.i_dc, res.frequency, res.iterations, min(best), max(best), len(best), match
        vals, status = _guard(point, 7)
        rows.append((value, *vals, status))
    w.csv("sweep.csv", [axis.symbol, "bias_current", "frequency", "iterations", "oracle_low", "oracle_high",
                        "oracle_ties", "matches_oracle", "status"],
          [_axis_unit(axis.symbol), "A", "Hz", "1", "A", "A", "1", "bool", "text"], rows)
    return {"f_target": o["f_target"], "start_bias": i_start,
            "all_match_oracle": all(r[7] is True for r in rows),
            "failed_points": sum(r[-1] != "ok" for r in rows)}


def oracle_best(osc: Oscillator, f_target: float, grid):
    """Grid biases tying for the smallest |f - f_target| (within one raw bin)."""
    currents, freqs = exhaustive_bias_scan(osc, f_target, grid)
    err = np.abs(freqs - f_target)
    if not np.any(np.isfinite(err)):
        raise ExperimentError("no grid bias oscillates")
    n = int(osc.duration / osc.config.dt * (1 - osc.trim_fraction))
    tol = default_lock_tolerance(n, osc.config.dt)
    best = np.nanmin(err)
    return [float(c) for c, e in zip(currents, err) if np.isfinite(e) and e <= best + tol], freqs


def array_setup(cfg):
    """Bias curve, plan and device for the array experiments."""
    o = cfg.options
    osc = Oscillator(cfg.params, replace(cfg.sources, thermal_enabled=False), _det(cfg),
                     duration=o["lock_duration"], trim_fraction=cfg.trim_fraction)
    currents = np.linspace(o["bias_start"], o["bias_stop"], o["bias_points"])
    curve = measure_bias_curve(osc, currents)
    plan = plan_channels(o["channels"], o["f_start"], o["margin"], curve, o["resolution"], o["lock_current"])
    device = ArrayDevice(cfg.params, cfg.sources, cfg.integrator if cfg.sources.thermal_enabled else _det(cfg),
                         cfg.pair, cfg.bead or BeadParams(temperature=cfg.params.temperature), cfg.quad, o["settle"])
    return curve, plan, device


def demux(run, plan, halfwidth):
    est = spectrum(run.mixed, run.dt)
    return est, channel_amplitudes(est, plan, halfwidth)


def _array_demo(cfg, w) -> dict:
    o = cfg.options
    curve, plan, device = array_setup(cfg)
    n = len(plan)
    if not 0 <= o["bead_channel"] < n:
        raise ExperimentError(f"bead_channel {o['bead_channel']} outside 0..{n - 1}")
    k_rep = o["threshold_replicas"] if cfg.sources.thermal_enabled else 10
    replicas = []
    for r in range(k_rep):
        run = run_array(plan, duration=cfg.duration, seed=cfg.seed, device=device, stream=(1, r))
        replicas.append(demux(run, plan, o["search_halfwidth"])[1])
        if not cfg.sources.thermal_enabled:
            replicas *= k_rep  # identical without noise
            break
    replicas = np.array(replicas)
    baseline = replicas.mean(axis=0)
    threshold = noise_floor_threshold(replicas, o["threshold_multiplier"], baseline)
    beads = [k == o["bead_channel"] for k in range(n)]
    run = run_array(plan, beads=beads, duration=cfg.duration, seed=cfg.seed, device=device, stream=(2,))
    est, measured = demux(run, plan, o["search_halfwidth"])
    report = detect(baseline, measured, threshold)
    w.csv("spectrum.csv", ["frequency", "amplitude"], ["Hz", "V"], zip(est.frequencies, est.amplitudes))
    w.csv("channels.csv", ["channel", "f_target", "bias_current", "baseline", "measured", "sensitivity",
                           "threshold", "present", "bead", "locked"],
          ["1", "Hz", "A", "V", "V", "1", "1", "bool", "bool", "bool"],
          [(c.index, ch.f_target, t.i_dc, d.baseline, d.measured, d.sensitivity, thr, d.present, t.bead, t.locked)
           for c, ch, t, d, thr in zip(plan.channels, plan.channels, run.truth, report.channels, report.threshold)])
    flagged = report.flagged
    return {"channels": n, "bead_channel": o["bead_channel"], "flagged": flagged,
            "correct": flagged == [o["bead_channel"]], "false_positives": [k for k in flagged if not beads[k]],
            "locked_channels": sum(t.locked for t in run.truth), "threshold_replicas": k_rep,
            "bias_curve": {"currents": curve.currents, "frequencies": curve.frequencies},
            "detection": report.as_dict()}


def _locking_range(cfg, w) -> dict:
    axis, o = cfg.sweep, cfg.options
    scan = LockScan(o["lock_span"], o["lock_step"], o["lock_duration"], cfg.trim_fraction)
    rows = []
    for value in axis.values:
        def point(value=value):
            p, s, d, b = apply_axis(cfg, axis.symbol, value)
            s = _bead_sources(cfg, p, replace(s, thermal_enabled=False), b)
            lr = locking_range(p, s, d.i_dc, d.i_rf, scan, _det(cfg))
            low = math.nan if lr.empty else lr.low
            high = math.nan if lr.empty else lr.high
            return lr.free_running, low, high, lr.width
        vals, status = _guard(point, 4)
        rows.append((value, *vals, status))
    w.csv("sweep.csv", [axis.symbol, "free_running", "lock_low", "lock_high", "lock_width", "status"],
          [_axis_unit(axis.symbol), "Hz", "Hz", "Hz", "Hz", "text"], rows)
    widths = [r[4] for r in rows]
    return {"widths": widths, "nondecreasing": bool(np.all(np.diff(widths) >= 0))}


RUNNERS = {
    "single-run": _single_run,
    "freq-vs-bias": _freq_vs_bias,
    "amp-vs-rf": _amp_vs_rf,
    "bias-vs-area": _bias_vs_area,
    "montecarlo": _montecarlo,
    "sensitivity-sweep": _sensitivity_sweep,
    "drift-calibration": _drift_calibration,
    "array-demo": _array_demo,
    "locking-range": _locking_range,
}

DESCRIPTIONS = {
    "single-run": "one trajectory: time series, m_z spectrum, frequency and amplitude",
    "freq-vs-bias": "oscillation frequency against DC bias, optionally with an RF field",
    "amp-vs-rf": "locked amplitude against injected RF current",
    "bias-vs-area": "bias needed for a target frequency against pillar area",
    "montecarlo": "free-running frequency spread over seeded thermal replicas",
    "sensitivity-sweep": "bead sensitivity against a device or bead parameter",
    "drift-calibration": "feedback bias calibration under Ms / damping drift",
    "array-demo": "20-channel FDM array with one bead and noise-floor detection",
    "locking-range": "locking-range width against injected RF current",
}


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> RunRecord:
    """Execute ``cfg`` and persist its files under ``out_dir/<run_id>``."""
    run_id = run_id_for(cfg)
    directory = os.path.join(out_dir or cfg.output, run_id)
    resolved = {k: v for k, v in cfg.resolved.items() if k != "output"}  # location is not an input
    record = RunRecord(run_id, _clean(resolved), cfg.seed, directory=directory)
    writer = RunWriter(directory)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            record.summary = RUNNERS[cfg.kind](cfg, writer)
        record.status = "ok"
    except Exception as exc:  # recorded, then re-raised for the caller
        record.status = f"failed: {type(exc).__name__}: {exc}"
        writer.summary(record)
        raise ExperimentError(record.status) from exc
    writer.summary(record)
    return record
