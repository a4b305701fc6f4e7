"""Experiment configuration documents.

YAML with nested sections and unit-suffixed scalars (``"5 kOe"``,
``"30 nm"``, ``"200 uA"``, ``"40 kT"``). Unknown keys are rejected and every
error names the key path and source line. See README for the grammar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np
import yaml

from .bead import BeadParams, QuadratureConfig
from .dynamics import DriveCurrent, FieldSources, IntegratorConfig, MagnetParams, PINNED_TILT_DEG
from .mtj import ResistancePair
from .units import KB, SensorGeometry, UnitError, normalize, parse_quantity, vec3

KINDS = (
    "single-run", "freq-vs-bias", "amp-vs-rf", "bias-vs-area", "montecarlo",
    "sensitivity-sweep", "drift-calibration", "array-demo", "locking-range",
)

# default time-varying field amplitude, 10 kOe * cos(0.7 pi / 180)
TABLE_RF_OE = 10000.0 * math.cos(0.7 * math.pi / 180.0)

# key -> (type or dimension, default). Dimensions go through parse_quantity;
# "int", "float", "bool", "str", "vector", "list" are plain types.
SCHEMA: dict = {
    "experiment": ("str", None),
    "seed": ("int", 0),
    "output": ("str", "results"),
    "device": {
        "ms_free": ("magnetization", "800 emu/cc"),
        "ms_pinned": ("magnetization", "1500 emu/cc"),
        "alpha": ("float", 0.01),
        "gamma": ("float", 2.21e5),
        "e_barrier": ("energy", "40 kT"),
        "length": ("length", "30 nm"),
        "width": ("length", "30 nm"),
        "t_free": ("length", "1.5 nm"),
        "t_pinned": ("length", "2 nm"),
        "t_spacer": ("length", "2 nm"),
        "polarization": ("float", 0.059),
        "pinned_tilt": ("angle", f"{PINNED_TILT_DEG} deg"),
        "easy_axis": ("vector", [0.0, 1.0, 0.0]),
        "temperature": ("temperature", "300 K"),
        "r_p": ("resistance", "1 kohm"),
        "r_ap": ("resistance", "2 kohm"),
        "literal_sign": ("bool", False),
    },
    "fields": {
        "h_static": ("field", "5 kOe"),
        "h_static_direction": ("vector", [1.0, 0.0, 0.0]),
        "rf_field": ("bool", False),
        "h_rf": ("field", f"{TABLE_RF_OE!r} Oe"),
        "h_rf_direction": ("vector", [1.0, 0.0, 0.0]),
        "h_rf_frequency": ("frequency_or_auto", "auto"),
        "thermal": ("bool", False),
    },
    "drive": {
        "i_dc": ("current", "200 uA"),
        "i_rf": ("current", "0 uA"),
        "f_rf": ("frequency_or_auto", "auto"),
        "detuning": ("frequency", "0.05 GHz"),
    },
    "bead": {
        "enabled": ("bool", False),
        "radius": ("length", "100 nm"),
        "ms": ("magnetization", "480 emu/cc"),
        "height": ("length", "400 nm"),
        "grid_points": ("int", 8),
        "segments": ("int", 64),
    },
    "integrator": {
        "dt": ("time", "1 ps"),
        "scheme": ("str", "auto"),
        "duration": ("time", "100 ns"),
        "record_every": ("int", 1),
        "trim_fraction": ("float", 0.25),
    },
    "sweep": {
        "axis": ("str", None),
        "start": ("any", None),
        "stop": ("any", None),
        "points": ("int", None),
    },
    "options": {
        "replicas": ("int", 100),
        "histogram_bins": ("int", 20),
        "channels": ("int", 20),
        "f_start": ("frequency", "10 GHz"),
        "margin": ("frequency", "0.1 GHz"),
        "resolution": ("current", "10 uA"),
        "bias_start": ("current", "150 uA"),
        "bias_stop": ("current", "250 uA"),
        "bias_points": ("int", 11),
        "lock_current": ("current", "60 uA"),
        "bead_channel": ("int", 7),
        "search_halfwidth": ("frequency", "0.04 GHz"),
        "threshold_multiplier": ("float", 3.0),
        "threshold_replicas": ("int", 10),
        "settle": ("time", "50 ns"),
        "amplitude_method": ("str", "peak"),
        "band_halfwidth": ("frequency", "1.5 GHz"),
        "f_target": ("frequency", "10 GHz"),
        "drift_alpha": ("float", 1.0),
        "max_iter": ("int", 20),
        "lock_span": ("frequency", "0.6 GHz"),
        "lock_step": ("frequency", "0.025 GHz"),
        "lock_duration": ("time", "300 ns"),
    },
}

# Sweepable symbols and their dimensions.
SWEEP_AXES = {
    "i_dc": "current", "i_rf": "current", "f_rf": "frequency", "h_static": "field",
    "h_rf": "field", "e_barrier": "energy", "t_free": "length", "alpha": "float",
    "ms_free": "magnetization", "area": "area", "polarization": "float",
    "temperature": "temperature", "bead_height": "length", "bead_radius": "length",
    "ms_factor": "float",
}

DEFAULT_SWEEPS = {
    "freq-vs-bias": ("i_dc", 150e-6, 250e-6, 10),
    "amp-vs-rf": ("i_rf", 0.0, 60e-6, 7),
    "bias-vs-area": ("area", 400e-18, 1600e-18, 4),
    "sensitivity-sweep": ("e_barrier", 20 * KB * 300.0, 80 * KB * 300.0, 4),
    "drift-calibration": ("ms_factor", 0.95, 1.05, 3),
    "locking-range": ("i_rf", 10e-6, 50e-6, 5),
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: tuple = (), line: Optional[int] = None):
        where = ".".join(str(p) for p in path) or "<document>"
        loc = f" (line {line})" if line is not None else ""
        super().__init__(f"{where}{loc}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class SweepAxis:
    symbol: str
    start: float
    stop: float
    points: int

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int = 0
    output: str = "results"
    params: MagnetParams = field(default_factory=MagnetParams)
    pair: ResistancePair = field(default_factory=ResistancePair)
    sources: FieldSources = field(default_factory=FieldSources)
    drive: DriveCurrent = field(default_factory=lambda: DriveCurrent(200e-6))
    auto_f_rf: bool = True
    auto_h_rf_frequency: bool = False
    detuning: float = 0.05e9
    bead: Optional[BeadParams] = None
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    duration: float = 100e-9
    trim_fraction: float = 0.25
    sweep: Optional[SweepAxis] = None
    options: dict = field(default_factory=dict)
    resolved: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        resolved = dict(self.resolved, seed=seed)
        return replace(self, seed=seed, integrator=replace(self.integrator, seed=seed), resolved=resolved)

    def with_output(self, output: str) -> "ExperimentConfig":
        return replace(self, output=output, resolved=dict(self.resolved, output=output))


def _line_map(text: str) -> dict:
    """Key path -> 1-based line of the key (or item) in the document."""
    lines: dict = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                lines[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                lines[path + (i,)] = v.start_mark.line + 1

    root = yaml.compose(text, Loader=yaml.SafeLoader)
    if root is not None:
        walk(root, ())
    return lines


def _convert(kind: str, value: Any, temperature: float):
    if kind == "any":
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ValueError("expected a string")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError("expected an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError("expected a number")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ValueError("expected true or false")
        return value
    if kind == "vector":
        if not isinstance(value, list) or len(value) != 3:
            raise ValueError("expected a list of three numbers")
        v = vec3(*[_convert("float", x, temperature) for x in value])
        if np.linalg.norm(v) == 0:
            raise ValueError("direction must be nonzero")
        return normalize(v)
    if kind == "frequency_or_auto":
        if value == "auto":
            return None
        return parse_quantity(value, "frequency", temperature)
    return parse_quantity(value, kind, temperature)


def _resolve_section(data, schema: dict, path: tuple, lines: dict, temperature: float) -> dict:
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", path, lines.get(path))
    for key in data:
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}", path + (key,), lines.get(path + (key,)))
    out = {}
    for key, spec in schema.items():
        if isinstance(spec, dict):
            continue
        kind, default = spec
        value = data.get(key, default)
        if value is None:
            out[key] = None
            continue
        try:
            out[key] = _convert(kind, value, temperature)
        except (UnitError, ValueError) as exc:
            raise ConfigError(str(exc), path + (key,), lines.get(path + (key,), lines.get(path))) from None
    return out


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def parse_config(text: str) -> ExperimentConfig:
    """Parse a configuration document into SI-valued objects."""
    try:
        data = yaml.safe_load(text)
        lines = _line_map(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed document: {getattr(exc, 'problem', exc)}", (),
                          mark.line + 1 if mark else None) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", (), 1)

    top = _resolve_section(data, SCHEMA, (), lines, 300.0)
    for section, schema in SCHEMA.items():
        if isinstance(schema, dict) and data.get(section) is not None and not isinstance(data[section], dict):
            raise ConfigError("expected a mapping", (section,), lines.get((section,)))
    kind = top["experiment"]
    if kind is None:
        raise ConfigError("missing required field", ("experiment",), None)
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; choose from {', '.join(KINDS)}",
                          ("experiment",), lines.get(("experiment",)))

    # temperature first: "kT" energies depend on it
    raw_dev = data.get("device") or {}
    t_spec = SCHEMA["device"]["temperature"]
    try:
        temperature = _convert(t_spec[0], raw_dev.get("temperature", t_spec[1]) if isinstance(raw_dev, dict)
                               else t_spec[1], 300.0)
    except (UnitError, ValueError) as exc:
        raise ConfigError(str(exc), ("device", "temperature"), lines.get(("device", "temperature"))) from None

    sec = {name: _resolve_section(data.get(name), SCHEMA[name], (name,), lines, temperature)
           for name in ("device", "fields", "drive", "bead", "integrator", "sweep", "options")}

    def build(path, fn):
        try:
            return fn()
        except (ValueError, UnitError) as exc:
            raise ConfigError(str(exc), path, lines.get(path)) from None

    d = sec["device"]
    geom = build(("device",), lambda: SensorGeometry(d["length"], d["width"], d["t_free"], d["t_pinned"],
                                                    d["t_spacer"]))
    tilt = d["pinned_tilt"]
    params = build(("device",), lambda: MagnetParams(
        ms_free=d["ms_free"], ms_pinned=d["ms_pinned"], alpha=d["alpha"], gamma=d["gamma"],
        e_barrier=d["e_barrier"], geometry=geom, polarization=d["polarization"],
        m_p=vec3(-math.cos(tilt), 0.0, math.sin(tilt)), easy_axis=d["easy_axis"], temperature=temperature))
    pair = build(("device",), lambda: ResistancePair(d["r_p"], d["r_ap"], d["literal_sign"]))

    f = sec["fields"]
    rf_on = f["rf_field"] and f["h_rf"] != 0.0
    sources = build(("fields",), lambda: FieldSources(
        h_static=f["h_static"] * f["h_static_direction"],
        h_rf_amplitude=f["h_rf"] * f["h_rf_direction"] if rf_on else np.zeros(3),
        h_rf_frequency=(f["h_rf_frequency"] or 0.0) if rf_on else 0.0, thermal_enabled=f["thermal"]))

    dr = sec["drive"]
    drive = build(("drive",), lambda: DriveCurrent(dr["i_dc"], dr["i_rf"], dr["f_rf"] or 0.0))

    b = sec["bead"]
    bead = None
    if b["enabled"]:
        bead = build(("bead",), lambda: BeadParams(b["radius"], b["ms"], vec3(0.0, 0.0, b["height"]), temperature))
    quad = build(("bead",), lambda: QuadratureConfig(b["grid_points"], b["segments"]))

    ig = sec["integrator"]
    scheme = ig["scheme"]
    if scheme == "auto":
        scheme = "heun" if f["thermal"] else "rk4"
    if scheme == "rk4" and f["thermal"]:
        raise ConfigError("thermal noise needs the heun scheme", ("integrator", "scheme"),
                          lines.get(("integrator", "scheme")))
    integrator = build(("integrator",), lambda: IntegratorConfig(ig["dt"], scheme, True, top["seed"],
                                                                 ig["record_every"]))
    if not ig["duration"] > 0:
        raise ConfigError("must be positive", ("integrator", "duration"), lines.get(("integrator", "duration")))
    if not 0 <= ig["trim_fraction"] < 1:
        raise ConfigError("must lie in [0, 1)", ("integrator", "trim_fraction"),
                          lines.get(("integrator", "trim_fraction")))

    sweep = _build_sweep(kind, data.get("sweep"), sec["sweep"], lines, temperature)

    opts = sec["options"]
    if opts["amplitude_method"] not in ("peak", "band"):
        raise ConfigError("expected 'peak' or 'band'", ("options", "amplitude_method"),
                          lines.get(("options", "amplitude_method")))
    for key in ("replicas", "channels", "histogram_bins", "threshold_replicas", "bias_points", "max_iter"):
        if opts[key] < 1:
            raise ConfigError("must be >= 1", ("options", key), lines.get(("options", key)))

    resolved = {"experiment": kind, "seed": top["seed"], "output": top["output"]}
    for name, values in sec.items():
        resolved[name] = {k: _jsonable(v) for k, v in values.items()}
    resolved["device"]["temperature"] = temperature
    if sweep is not None:
        resolved["sweep"] = {"axis": sweep.symbol, "start": sweep.start, "stop": sweep.stop, "points": sweep.points}

    return ExperimentConfig(
        kind=kind, seed=top["seed"], output=top["output"], params=params, pair=pair, sources=sources,
        drive=drive, auto_f_rf=dr["f_rf"] is None, auto_h_rf_frequency=rf_on and f["h_rf_frequency"] is None, detuning=dr["detuning"], bead=bead, quad=quad,
        integrator=integrator, duration=ig["duration"], trim_fraction=ig["trim_fraction"], sweep=sweep,
        options=opts, resolved=resolved)


def _build_sweep(kind, raw, sw, lines, temperature) -> Optional[SweepAxis]:
    if kind not in DEFAULT_SWEEPS:
        if raw:
            raise ConfigError(f"experiment {kind!r} takes no sweep", ("sweep",), lines.get(("sweep",)))
        return None
    axis, start, stop, points = DEFAULT_SWEEPS[kind]
    given = {k: v for k, v in (raw or {}).items() if v is not None}
    if "axis" in given and given["axis"] != axis:
        axis = sw["axis"]
        if axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}",
                              ("sweep", "axis"), lines.get(("sweep", "axis")))
        if not {"start", "stop"} <= given.keys():
            raise ConfigError("start and stop are required when changing the axis", ("sweep",),
                              lines.get(("sweep",)))
    dim = SWEEP_AXES[axis]
    vals = {}
    for key, default in (("start", start), ("stop", stop)):
        if key in given:
            try:
                vals[key] = _convert(dim, given[key], temperature)
            except (UnitError, ValueError) as exc:
                raise ConfigError(str(exc), ("sweep", key), lines.get(("sweep", key))) from None
        else:
            vals[key] = default
    points = sw["points"] if sw["points"] is not None else points
    if points < 2:
        raise ConfigError("sweeps need at least 2 points", ("sweep", "points"), lines.get(("sweep", "points")))
    return SweepAxis(axis, vals["start"], vals["stop"], points)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
