"""Compiled LLGS integrator.

The packed parameter vector layout is owned by ``dynamics.pack_parameters``;
indices are named below so the two stay in sync.
"""

import math

import numba as nb
import numpy as np

GAMMA, ALPHA, HK = 0, 1, 2
EASY = 3  # 3..5
H_CONST = 6  # 6..8, static + bead field
H_RF = 9  # 9..11
F_HRF = 12
STT_PER_AMP = 13
MP = 14  # 14..16
I_DC, I_RF, F_RF, PHASE = 17, 18, 19, 20
N_PARAMS = 21

RK4 = 0
HEUN = 1

OK = 0
NONFINITE = 1


@nb.njit(cache=True)
def _rhs(mx, my, mz, t, p, nx, ny, nz):
    """Explicit Landau-Lifshitz-Slonczewski right-hand side."""
    g = p[GAMMA]
    a = p[ALPHA]
    hk = p[HK]
    ex = p[EASY]
    ey = p[EASY + 1]
    ez = p[EASY + 2]
    proj = hk * (mx * ex + my * ey + mz * ez)
    hx = proj * ex + p[H_CONST] + nx
    hy = proj * ey + p[H_CONST + 1] + ny
    hz = proj * ez + p[H_CONST + 2] + nz
    if p[H_RF] != 0.0 or p[H_RF + 1] != 0.0 or p[H_RF + 2] != 0.0:
        c = math.cos(2.0 * math.pi * p[F_HRF] * t)
        hx += p[H_RF] * c
        hy += p[H_RF + 1] * c
        hz += p[H_RF + 2] * c
    cur = p[I_DC]
    if p[I_RF] != 0.0:
        cur += p[I_RF] * math.cos(2.0 * math.pi * p[F_RF] * t + p[PHASE])
    aj = p[STT_PER_AMP] * cur

    # m x H
    cx = my * hz - mz * hy
    cy = mz * hx - mx * hz
    cz = mx * hy - my * hx
    # m x (m x H)
    dx = my * cz - mz * cy
    dy = mz * cx - mx * cz
    dz = mx * cy - my * cx
    px = p[MP]
    py = p[MP + 1]
    pz = p[MP + 2]
    # mp x m
    sx = py * mz - pz * my
    sy = pz * mx - px * mz
    sz = px * my - py * mx
    # m x (mp x m)
    qx = my * sz - mz * sy
    qy = mz * sx - mx * sz
    qz = mx * sy - my * sx

    f = 1.0 / (1.0 + a * a)
    ox = f * (-g * cx - a * g * dx + aj * qx - a * aj * sx)
    oy = f * (-g * cy - a * g * dy + aj * qy - a * aj * sy)
    oz = f * (-g * cz - a * g * dz + aj * qz - a * aj * sz)
    return ox, oy, oz


@nb.njit(cache=True)
def integrate(m, t0, i0, dt, n, p, noise, scheme, renormalize, every, out, out_start):
    """Advance ``m`` (modified in place) by ``n`` steps.

    Step k runs from t0 + (i0 + k)*dt. Every ``every``-th state (counted from
    the global step index) is written to ``out`` starting at row ``out_start``.
    ``noise`` holds one thermal field sample per step for the Heun scheme.
    Returns (status, failing step, next output row).
    """
    mx = m[0]
    my = m[1]
    mz = m[2]
    row = out_start
    h = 0.5 * dt
    for k in range(n):
        idx = i0 + k
        t = t0 + idx * dt
        if scheme == RK4:
            k1x, k1y, k1z = _rhs(mx, my, mz, t, p, 0.0, 0.0, 0.0)
            k2x, k2y, k2z = _rhs(mx + h * k1x, my + h * k1y, mz + h * k1z, t + h, p, 0.0, 0.0, 0.0)
            k3x, k3y, k3z = _rhs(mx + h * k2x, my + h * k2y, mz + h * k2z, t + h, p, 0.0, 0.0, 0.0)
            k4x, k4y, k4z = _rhs(mx + dt * k3x, my + dt * k3y, mz + dt * k3z, t + dt, p, 0.0, 0.0, 0.0)
            nx_ = mx + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            ny_ = my + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            nz_ = mz + dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        else:
            wx = noise[k, 0]
            wy = noise[k, 1]
            wz = noise[k, 2]
            k1x, k1y, k1z = _rhs(mx, my, mz, t, p, wx, wy, wz)
            ux = mx + dt * k1x
            uy = my + dt * k1y
            uz = mz + dt * k1z
            k2x, k2y, k2z = _rhs(ux, uy, uz, t + dt, p, wx, wy, wz)
            nx_ = mx + h * (k1x + k2x)
            ny_ = my + h * (k1y + k2y)
            nz_ = mz + h * (k1z + k2z)
        if not (math.isfinite(nx_) and math.isfinite(ny_) and math.isfinite(nz_)):
            m[0] = mx
            m[1] = my
            m[2] = mz
            return NONFINITE, idx, row
        if renormalize:
            inv = 1.0 / math.sqrt(nx_ * nx_ + ny_ * ny_ + nz_ * nz_)
            nx_ *= inv
            ny_ *= inv
            nz_ *= inv
        mx = nx_
        my = ny_
        mz = nz_
        if (idx + 1) % every == 0:
            out[row, 0] = mx
            out[row, 1] = my
            out[row, 2] = mz
            row += 1
    m[0] = mx
    m[1] = my
    m[2] = mz
    return OK, -1, row


def rhs(m, t, p, h_thermal=(0.0, 0.0, 0.0)):
    """Python-callable view of the compiled right-hand side."""
    return np.array(_rhs(float(m[0]), float(m[1]), float(m[2]), float(t), p, *map(float, h_thermal)))
