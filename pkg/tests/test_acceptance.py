"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import json
import math
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from stnosense.array import CouplingModel, on_grid, run_array
from stnosense.bead import (BeadParams, QuadratureConfig, averaged_bead_field, bead_field_at_sensor, dipole_field,
                            layer_stray_field)
from stnosense.config import parse_config
from stnosense.dynamics import (DriveCurrent, FieldSources, IntegratorConfig, MagnetParams, SimState,
                                default_initial_state, energy, make_rng, simulate)
from stnosense.experiments import array_setup, demux, read_csv, run_experiment
from stnosense.metrics import dominant_frequency, steady_amplitude, trim
from stnosense.readout import channel_amplitudes, detect, noise_floor_threshold, spectrum
from stnosense.units import KB, vec3

pytestmark = pytest.mark.acceptance

H5K = 5e3 * 1e3 / (4 * math.pi)  # 5 kOe in A/m


def _warm():
    p = MagnetParams()
    simulate(default_initial_state(p), p, FieldSources(), DriveCurrent(), IntegratorConfig(), 1e-11)
    simulate(default_initial_state(p), p, FieldSources(thermal_enabled=True), DriveCurrent(),
             IntegratorConfig(scheme="heun"), 1e-11, make_rng(0))


def test_c01_norm_and_energy(criterion):
    _warm()
    p = MagnetParams()
    t0 = time.perf_counter()
    driven = simulate(default_initial_state(p), p, FieldSources(), DriveCurrent(200e-6),
                      IntegratorConfig(record_every=10), 1e-6)
    src = FieldSources(h_static=vec3(1e5, 0, 3e4))
    relax = simulate(SimState(vec3(0.2, -0.9, 0.3)), p, src, DriveCurrent(), IntegratorConfig(record_every=10), 1e-6)
    elapsed = time.perf_counter() - t0
    norm_err = max(np.max(np.abs(np.linalg.norm(tr.m, axis=1) - 1)) for tr in (driven, relax))
    e = energy(relax.m, p, src.h_static)
    rise = float(np.max(np.diff(e)) / np.max(np.abs(e)))
    ok = norm_err <= 1e-9 and rise <= 1e-12 and elapsed < 10
    criterion(1, ok, f"2 x 1e6 steps, max norm error {norm_err:.1e}, max relative energy rise {rise:.1e}, "
                     f"{elapsed:.1f} s")
    assert ok


def test_c02_larmor(criterion):
    _warm()
    p = MagnetParams(alpha=0.0, e_barrier=0.0)
    t0 = time.perf_counter()
    traj = simulate(SimState(vec3(1, 0, 0)), p, FieldSources(h_static=vec3(0, 0, H5K)), DriveCurrent(),
                    IntegratorConfig(), 20e-9)
    x = traj.m[:, 0]
    idx = np.nonzero(np.signbit(x[:-1]) != np.signbit(x[1:]))[0]
    tc = traj.t[idx] - x[idx] * (traj.t[idx + 1] - traj.t[idx]) / (x[idx + 1] - x[idx])
    f = (len(tc) - 1) / (2 * (tc[-1] - tc[0]))
    elapsed = time.perf_counter() - t0
    err = abs(f - 13.996e9) / 13.996e9
    ok = err <= 1e-3 and elapsed < 5
    criterion(2, ok, f"f = {f / 1e9:.5f} GHz vs 13.996 GHz, error {err:.1e}, {elapsed:.1f} s")
    assert ok


def test_c03_equipartition(criterion):
    _warm()
    t0 = time.perf_counter()
    cfg = IntegratorConfig(scheme="heun", record_every=10)
    results = []
    for kt in (40, 60, 80):
        p = MagnetParams(e_barrier=kt * KB * 300.0)
        src = FieldSources(h_static=vec3(), thermal_enabled=True)
        sq = []
        for k in range(100):
            traj = simulate(SimState(p.easy_axis), p, src, DriveCurrent(), cfg, 50e-9, make_rng(kt, k))
            sq.append(np.mean(traj.m[len(traj) // 5:, 0] ** 2))
        got = math.sqrt(np.mean(sq))
        want = math.sqrt(1.0 / (2 * kt))
        results.append((kt, got, want, abs(got - want) / want))
    elapsed = time.perf_counter() - t0
    ok = all(r[3] <= 0.10 for r in results) and elapsed < 300
    criterion(3, ok, ", ".join(f"{kt} kT: {g:.4f} vs {w:.4f}" for kt, g, w, _ in results) + f"; {elapsed:.0f} s")
    assert ok


def test_c04_sustained_oscillation(criterion):
    p = MagnetParams()
    traj = simulate(default_initial_state(p), p, FieldSources(), DriveCurrent(200e-6), IntegratorConfig(), 100e-9)
    half = traj.m[len(traj) // 2:, 2]
    q = len(half) // 2
    a1, a2 = steady_amplitude(half[:q], traj.dt), steady_amplitude(half[q:], traj.dt)
    drift = abs(a2 - a1) / a1
    ok = a1 > 0.1 and drift < 0.01
    criterion(4, ok, f"m_z amplitude {a1:.4f} -> {a2:.4f} over the final half, drift {drift:.1e}")
    assert ok


def test_c05_frequency_vs_bias(criterion, tmp_path):
    cfg = parse_config("experiment: freq-vs-bias\nfields: {rf_field: true}\n")
    s = run_experiment(cfg, str(tmp_path)).summary
    ok = s["monotone_static"] and s["rf_wider"]
    criterion(5, ok, f"static monotone {s['monotone_static']}, span {s['span_static'] / 1e9:.3f} GHz; "
                     f"with RF field span {s['span_rf'] / 1e9:.3f} GHz after excluding "
                     f"{s['entrained_points']} entrained points, wider {s['rf_wider']}")
    assert ok


def test_c06_injection_locking(criterion, tmp_path):
    cfg = parse_config("experiment: single-run\ndrive: {i_rf: 40 uA, detuning: 0.05 GHz}\n"
                       "integrator: {duration: 300 ns}\n")
    s = run_experiment(cfg, str(tmp_path)).summary
    n = int(300e-9 / 1e-12 * 0.75) + 1
    interp_bin = 1.0 / (4 * n * 1e-12)
    lock_err = abs(s["frequency"] - s["f_inj"])
    cfg = parse_config("experiment: locking-range\n")
    widths = run_experiment(cfg, str(tmp_path)).summary["widths"]
    ok = lock_err <= interp_bin and all(b >= a for a, b in zip(widths, widths[1:])) and widths[-1] > 0
    criterion(6, ok, f"|f - f_inj| = {lock_err / 1e6:.3f} MHz (bin {interp_bin / 1e6:.3f} MHz); widths over "
                     f"i_rf 10..50 uA: {[round(w / 1e9, 3) for w in widths]} GHz")
    assert ok


def test_c07_dipole_far_field(criterion):
    t0 = time.perf_counter()
    p = MagnetParams()
    g = p.geometry
    errs = []
    for layer, mvec, centre in (("free", vec3(8e5, 0, 0), g.center), ("pinned", vec3(-1e6, 0, 1e6), g.pinned_center)):
        vol = g.length * g.width * (g.t_free if layer == "free" else g.t_pinned)
        for d in (vec3(0, 0, 1), vec3(1, 0, 0), vec3(1, 1, 1) / math.sqrt(3)):
            at = centre + 10 * g.length * d
            h = layer_stray_field(layer, mvec, g, at)
            ref = dipole_field(mvec * vol, at - centre)
            errs.append(np.linalg.norm(h - ref) / np.linalg.norm(ref))
    m = vec3(1e-15, 0, 2e-15)
    pos = g.center + vec3(0, 0, 10 * g.length)
    hb = averaged_bead_field(m, g, pos)
    errs.append(np.linalg.norm(hb - dipole_field(m, g.center - pos)) / np.linalg.norm(hb))
    at = vec3(0, 0, 400e-9)
    conv = []
    a = layer_stray_field("pinned", vec3(-1e6, 0, 1e6), g, at, QuadratureConfig(segments=32))
    b = layer_stray_field("pinned", vec3(-1e6, 0, 1e6), g, at, QuadratureConfig(segments=64))
    conv.append(np.linalg.norm(a - b) / np.linalg.norm(b))
    bead = BeadParams()
    a = bead_field_at_sensor(bead, p, FieldSources().h_static, QuadratureConfig(grid_points=8, segments=32))
    b = bead_field_at_sensor(bead, p, FieldSources().h_static, QuadratureConfig(grid_points=16, segments=64))
    conv.append(np.linalg.norm(a - b) / np.linalg.norm(b))
    elapsed = time.perf_counter() - t0
    ok = max(errs) < 0.01 and max(conv) < 1e-3 and elapsed < 10
    criterion(7, ok, f"max far-field error {max(errs):.1e}, max grid-doubling change {max(conv):.1e}, "
                     f"{elapsed:.1f} s")
    assert ok


def test_c08_montecarlo_margin(criterion, tmp_path):
    cfg = parse_config("experiment: montecarlo\nseed: 8\nfields: {thermal: true}\noptions: {replicas: 100}\n")
    s = run_experiment(cfg, str(tmp_path)).summary
    flagged = bool(s["discrepancy"])
    ok = s["valid"] == 100 and (s["within_margin"] or flagged)
    verdict = "within margin" if s["within_margin"] else f"discrepancy flagged: {s['discrepancy']}"
    criterion(8, ok, f"sigma = {s['std'] / 1e9:.3f} GHz over {s['valid']} replicas; {verdict}")
    assert ok


def test_c09_bead_sensitivity(criterion):
    _warm()
    t0 = time.perf_counter()
    p = MagnetParams()
    src = FieldSources()
    hb = bead_field_at_sensor(BeadParams(), p, src.h_static)
    free = simulate(default_initial_state(p), p, src, DriveCurrent(200e-6), IntegratorConfig(), 300e-9)
    f_inj = dominant_frequency(trim(free.m[:, 2]), free.dt) + 0.05e9
    drive = DriveCurrent(200e-6, 40e-6, f_inj)

    def amp(traj, fraction=0.25):
        return steady_amplitude(trim(traj.m[:, 2], fraction), traj.dt, method="band", halfwidth=1.5e9)

    det = [amp(simulate(default_initial_state(p), p, replace(src, bead_field=b), drive, IntegratorConfig(), 300e-9))
           for b in (None, hb)]
    sens = abs(det[1] - det[0]) / det[0]
    noisy = IntegratorConfig(scheme="heun", record_every=4)
    reps = {0: [], 1: []}
    for r in range(10):
        for flag, b in ((0, None), (1, hb)):
            traj = simulate(default_initial_state(p), p, replace(src, bead_field=b, thermal_enabled=True), drive,
                            noisy, 30e-6, make_rng(9, r, flag))
            reps[flag].append(amp(traj, 0.02))
    a0, a1 = np.array(reps[0]), np.array(reps[1])
    floor = float(noise_floor_threshold(a0[:, None])[0])
    noisy_sens = abs(a1.mean() - a0.mean()) / a0.mean()
    elapsed = time.perf_counter() - t0
    ok = 0.002 <= sens <= 0.05 and noisy_sens > floor and elapsed < 300
    criterion(9, ok, f"deterministic sensitivity {100 * sens:.2f}%, noisy {100 * noisy_sens:.2f}% vs 3 sigma floor "
                     f"{100 * floor:.2f}% (10 x 30 us replicas), {elapsed:.0f} s")
    assert ok


def test_c10_array_demux(criterion):
    quiet = parse_config("experiment: array-demo\n")
    _, plan, device = array_setup(quiet)
    run = run_array(plan, duration=quiet.duration, device=device)
    _, got = demux(run, plan, quiet.options["search_halfwidth"])
    c = CouplingModel.uniform(len(plan)).coefficients
    alone = [channel_amplitudes(spectrum(c[k] * run.signals[k], run.dt), plan, 0.04e9)[k] for k in range(len(plan))]
    recovery = float(np.max(np.abs(got - alone) / alone))

    noisy = parse_config("experiment: array-demo\nfields: {thermal: true}\n")
    _, plan_n, device_n = array_setup(noisy)
    hw = noisy.options["search_halfwidth"]
    replicas = np.array([demux(run_array(plan_n, duration=noisy.duration, seed=0, device=device_n, stream=(1, r)),
                               plan_n, hw)[1] for r in range(10)])
    baseline = replicas.mean(axis=0)
    threshold = noise_floor_threshold(replicas, 3.0, baseline)
    target = noisy.options["bead_channel"]
    beads = [k == target for k in range(len(plan_n))]
    hits = 0
    for trial in range(20):
        run_b = run_array(plan_n, beads=beads, duration=noisy.duration, seed=100 + trial, device=device_n,
                          stream=(2,))
        hits += detect(baseline, demux(run_b, plan_n, hw)[1], threshold).flagged == [target]
    ok = recovery <= 0.01 and hits >= 19
    criterion(10, ok, f"noise-off recovery error {100 * recovery:.3f}%; noisy detection exact in {hits}/20 trials "
                      f"(median threshold {100 * float(np.median(threshold)):.1f}%)")
    assert ok


def test_c11_calibration(criterion, tmp_path):
    cfg = parse_config("experiment: drift-calibration\nsweep: {start: 0.95, stop: 1.05, points: 2}\n")
    rec = run_experiment(cfg, str(tmp_path))
    names, _, data = read_csv(os.path.join(rec.directory, "sweep.csv"))
    col = {n: data[:, i] for i, n in enumerate(names)}
    target = cfg.options["f_target"]
    rows = []
    for k in range(len(data)):
        i, f = col["bias_current"][k], col["frequency"][k]
        rows.append(bool(np.isfinite(f) and abs(f - target) <= 0.05e9 and on_grid(i, 10e-6)
                         and col["matches_oracle"][k] == 1))
    ok = all(rows)
    detail = "; ".join(f"Ms x{col['ms_factor'][k]:.2f}: {col['bias_current'][k] * 1e6:.0f} uA, "
                       f"{col['frequency'][k] / 1e9:.4f} GHz, oracle ties {col['oracle_low'][k] * 1e6:.0f}-"
                       f"{col['oracle_high'][k] * 1e6:.0f} uA"
                       for k in range(len(data)))
    criterion(11, ok, detail)
    assert ok


def _tree(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            with open(os.path.join(d, f), "rb") as fh:
                out[os.path.relpath(os.path.join(d, f), root)] = fh.read()
    return out


def test_c12_determinism(criterion, tmp_path):
    docs = ["experiment: single-run\nseed: 5\nfields: {thermal: true}\nintegrator: {duration: 20 ns}\n",
            "experiment: montecarlo\nseed: 5\noptions: {replicas: 4}\nintegrator: {duration: 20 ns}\n",
            "experiment: sensitivity-sweep\nseed: 5\nfields: {thermal: true}\nsweep: {points: 2}\n"
            "integrator: {duration: 30 ns}\n"]
    same = []
    for text in docs:
        trees = []
        for name in ("a", "b"):
            run_experiment(parse_config(text), str(tmp_path / name))
            trees.append(_tree(tmp_path / name))
        same.append(bool(trees[0]) and trees[0] == trees[1])
        for name in ("a", "b"):
            for f in (tmp_path / name).rglob("*"):
                if f.is_file():
                    f.unlink()
    ok = all(same)
    criterion(12, ok, f"{sum(same)}/{len(same)} experiment kinds bit-identical on rerun")
    assert ok
