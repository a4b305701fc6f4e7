"""Physical constants, unit conversions and sensor geometry.

Everything inside the package is SI: fields and magnetizations in A/m, lengths
in meters, energies in joules. Values written in Oe, emu/cc or nm are converted
once, at configuration parse time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

MU0 = 4e-7 * math.pi  # T m / A
KB = 1.380649e-23  # J / K
E_CHARGE = 1.602177e-19  # C
HBAR = 1.054572e-34  # J s

OE_TO_A_PER_M = 1000.0 / (4.0 * math.pi)
EMU_CC_TO_A_PER_M = 1000.0


def vec3(x=0.0, y=0.0, z=0.0) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def oersted_to_si(h):
    """Oe -> A/m."""
    return h * OE_TO_A_PER_M


def si_to_oersted(h):
    return h / OE_TO_A_PER_M


def emu_cc_to_si(m):
    """emu/cc -> A/m."""
    return m * EMU_CC_TO_A_PER_M


def si_to_emu_cc(m):
    return m / EMU_CC_TO_A_PER_M


@dataclass(frozen=True)
class SensorGeometry:
    """Rectangular MTJ pillar.

    The film plane is x-y and the stack is built along z: the free layer is
    centred on ``center``, the spacer and pinned layer sit below it, and beads
    live on the +z side.
    """

    length: float = 30e-9
    width: float = 30e-9
    t_free: float = 1.5e-9
    t_pinned: float = 2e-9
    t_spacer: float = 2e-9
    center: np.ndarray = field(default_factory=lambda: vec3())

    def __post_init__(self):
        for name in ("length", "width", "t_free", "t_pinned", "t_spacer"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SensorGeometry.{name} must be strictly positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def area(self) -> float:
        return self.length * self.width

    @property
    def volume_free(self) -> float:
        return self.length * self.width * self.t_free

    @property
    def volume_pinned(self) -> float:
        return self.length * self.width * self.t_pinned

    @property
    def pinned_center(self) -> np.ndarray:
        dz = 0.5 * self.t_free + self.t_spacer + 0.5 * self.t_pinned
        return self.center - vec3(0.0, 0.0, dz)

    def with_area(self, area: float) -> "SensorGeometry":
        """Square footprint of the given area, other dimensions unchanged."""
        side = math.sqrt(area)
        return SensorGeometry(side, side, self.t_free, self.t_pinned, self.t_spacer, self.center)


def current_to_density(i: float, geom: SensorGeometry) -> float:
    """Current (A) through the pillar -> current density (A/m^2); sign kept."""
    if geom.area <= 0:
        raise ValueError("sensor area must be positive")
    return i / geom.area


# Unit-suffixed scalar parsing ("5 kOe", "30 nm", "200 uA", "40 kT").

_PREFIX = {
    "": 1.0, "T": 1e12, "G": 1e9, "M": 1e6, "k": 1e3, "m": 1e-3,
    "u": 1e-6, "µ": 1e-6, "n": 1e-9, "p": 1e-12, "f": 1e-15,
}

# base unit -> (dimension, factor to SI)
_BASE = {
    "Oe": ("field", OE_TO_A_PER_M),
    "A/m": ("field", 1.0),
    "emu/cc": ("magnetization", EMU_CC_TO_A_PER_M),
    "m": ("length", 1.0),
    "A": ("current", 1.0),
    "Hz": ("frequency", 1.0),
    "s": ("time", 1.0),
    "K": ("temperature", 1.0),
    "J": ("energy", 1.0),
    "rad": ("angle", 1.0),
    "deg": ("angle", math.pi / 180.0),
    "A/m2": ("current_density", 1.0),
    "ohm": ("resistance", 1.0),
    "m2": ("area", 1.0),
}

# Dimensions sharing a base symbol: magnetization may be written in A/m too.
_COMPATIBLE = {"magnetization": {"field", "magnetization"}}

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUANTITY = re.compile(rf"^\s*({_NUMBER})\s*([^\s\d].*?)?\s*$")


class UnitError(ValueError):
    pass


def _unit_factor(unit: str, temperature: float) -> tuple[str, float]:
    if unit in ("kT", "kBT"):
        return "energy", KB * temperature
    if unit in _BASE:
        return _BASE[unit]
    for p, scale in _PREFIX.items():
        if p and unit.startswith(p) and unit[len(p):] in _BASE:
            dim, f = _BASE[unit[len(p):]]
            if dim in ("angle", "temperature"):
                break
            if dim == "area":
                scale *= scale  # prefix applies to the length
            return dim, scale * f
    raise UnitError(f"unknown unit {unit!r}")


def parse_quantity(value, dimension: str, temperature: float = 300.0) -> float:
    """Convert ``"5 kOe"``-style input to an SI float.

    Bare numbers are taken as SI already. ``kT`` is an energy unit evaluated at
    ``temperature``.
    """
    if isinstance(value, bool):
        raise UnitError(f"expected a {dimension}, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise UnitError(f"expected a {dimension}, got {type(value).__name__}")
    m = _QUANTITY.match(value)
    if not m:
        raise UnitError(f"cannot parse quantity {value!r}")
    number = float(m.group(1))
    unit = (m.group(2) or "").replace(" ", "")
    if not unit:
        return number
    dim, factor = _unit_factor(unit, temperature)
    if dim != dimension and dim not in _COMPATIBLE.get(dimension, ()):
        raise UnitError(f"{value!r} is a {dim}, expected a {dimension}")
    if 0 < factor < 1:
        inv = round(1.0 / factor)
        if inv == 10 ** round(math.log10(inv)):
            return number / inv  # exact power of ten: correctly rounded
    return number * factor
