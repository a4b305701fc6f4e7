"""Tunnel-magnetoresistance readout of the free-layer trajectory."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COS_TOL = 1e-9


@dataclass(frozen=True)
class ResistancePair:
    """Parallel / antiparallel resistances.

    ``literal_sign`` flips the cosine term so that R(0) = r_ap, for comparison
    with the printed angular formula; the default puts the parallel state at
    the resistance minimum.
    """

    r_p: float = 1e3
    r_ap: float = 2e3
    literal_sign: bool = False

    def __post_init__(self):
        if not 0 < self.r_p < self.r_ap:
            raise ValueError("need 0 < r_p < r_ap")


def resistance(cos_theta, pair: ResistancePair = ResistancePair()):
    c = np.asarray(cos_theta, dtype=float)
    if np.any(np.abs(c) > 1.0 + COS_TOL):
        raise ValueError("|cos(theta)| exceeds 1")
    c = np.clip(c, -1.0, 1.0)
    mean = 0.5 * (pair.r_p + pair.r_ap)
    half = 0.5 * (pair.r_ap - pair.r_p)
    r = mean + half * c if pair.literal_sign else mean - half * c
    return r.item() if r.ndim == 0 else r


def voltage_series(traj, m_p, pair: ResistancePair = ResistancePair()) -> np.ndarray:
    """V(t) = i(t) R(m(t) . m_p) for an ideal current-source drive."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    cos_theta = traj.m @ np.asarray(m_p, dtype=float)
    return traj.current * resistance(cos_theta, pair)
