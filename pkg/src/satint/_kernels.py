"""Compiled fixed-step kernels for polynomial plants.

Polynomial right-hand sides are stored as flat arrays: ``f_coef[t]`` times
``prod(x_j ** f_pow[t, j]) * u ** f_pow[t, n]`` accumulates into coordinate
``f_row[t]``; the readout uses ``g_coef`` / ``g_pow`` without the input column.
Every kernel loops over a batch of independent instances.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MODE_SATURATING = 0
MODE_CLAMPED = 1


@njit(cache=True, nogil=True)
def _poly_f(coef, pw, row, x, u, out):
    n = x.shape[0]
    for i in range(n):
        out[i] = 0.0
    for t in range(coef.shape[0]):
        v = coef[t]
        for j in range(n):
            p = pw[t, j]
            if p == 1:
                v *= x[j]
            elif p > 1:
                v *= x[j] ** p
        p = pw[t, n]
        if p == 1:
            v *= u
        elif p > 1:
            v *= u ** p
        out[row[t]] += v


@njit(cache=True, nogil=True)
def _poly_g(coef, pw, x):
    n = x.shape[0]
    acc = 0.0
    for t in range(coef.shape[0]):
        v = coef[t]
        for j in range(n):
            p = pw[t, j]
            if p == 1:
                v *= x[j]
            elif p > 1:
                v *= x[j] ** p
        acc += v
    return acc


@njit(cache=True, nogil=True)
def _rk4(fc, fp, fr, x, ua, um, ub, dt, k1, k2, k3, k4, tmp):
    """One RK4 step in place; input ``ua`` at the start, ``um`` mid-step, ``ub`` at the end."""
    n = x.shape[0]
    _poly_f(fc, fp, fr, x, ua, k1)
    for j in range(n):
        tmp[j] = x[j] + 0.5 * dt * k1[j]
    _poly_f(fc, fp, fr, tmp, um, k2)
    for j in range(n):
        tmp[j] = x[j] + 0.5 * dt * k2[j]
    _poly_f(fc, fp, fr, tmp, um, k3)
    for j in range(n):
        tmp[j] = x[j] + dt * k3[j]
    _poly_f(fc, fp, fr, tmp, ub, k4)
    for j in range(n):
        x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@njit(cache=True, nogil=True)
def _blown_up(x, guard):
    for j in range(x.shape[0]):
        if not abs(x[j]) <= guard:
            return True
    return False


@njit(cache=True, nogil=True)
def open_loop(fc, fp, fr, X0, U, dt, nsteps, stride, guard):
    """Plant trajectories under prescribed inputs.

    ``U`` has shape (B, 1) for constant inputs or (B, nsteps + 1) for inputs
    sampled on the step grid (linearly interpolated inside each step).
    Returns states every ``stride`` steps and, per instance, the step at which
    the blow-up guard tripped (-1 if never).
    """
    B, n = X0.shape
    M = nsteps // stride + 1
    XS = np.full((B, M, n), np.nan)
    div = np.full(B, -1, np.int64)
    const = U.shape[1] == 1
    x = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    for b in range(B):
        x[:] = X0[b]
        XS[b, 0, :] = x
        for i in range(nsteps):
            if const:
                ua = U[b, 0]
                ub = ua
            else:
                ua = U[b, i]
                ub = U[b, i + 1]
            _rk4(fc, fp, fr, x, ua, 0.5 * (ua + ub), ub, dt, k1, k2, k3, k4, tmp)
            if _blown_up(x, guard):
                div[b] = i + 1
                break
            if (i + 1) % stride == 0:
                XS[b, (i + 1) // stride, :] = x
    return XS, div


@njit(cache=True, nogil=True)
def _sat_rhs(u, w, umin, umax):
    if u <= umin:
        return w if w > 0.0 else 0.0
    if u >= umax:
        return w if w < 0.0 else 0.0
    return w


@njit(cache=True, nogil=True)
def _clip(u, lo, hi):
    if u < lo:
        return lo
    if u > hi:
        return hi
    return u


@njit(cache=True, nogil=True)
def closed_loop(fc, fp, fr, gc, gp, X0, U0, K, R, umin, umax, dt, nsteps, stride, guard,
                mode, fault_on, fault_off, y_offset):
    """Plant in feedback with an integrator driven by ``w = k (r - y_measured)``.

    Projected Heun coupling: predict the integrator state with the drive at
    the step start, advance the plant by RK4 with the input interpolated
    linearly between current and predicted value, then correct the
    integrator with the average of the drives at both ends and clamp.

    ``mode`` selects the saturating integrator (state ``u`` confined to the
    box) or a plain integrator ``v`` with clamped output ``u = sat(v)``.
    During steps ``fault_on <= i < fault_off`` the measured output is offset
    by ``y_offset``.
    """
    B, n = X0.shape
    M = nsteps // stride + 1
    XS = np.full((B, M, n), np.nan)
    US = np.full((B, M), np.nan)
    VS = np.full((B, M), np.nan)
    div = np.full(B, -1, np.int64)
    x = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    for b in range(B):
        x[:] = X0[b]
        k = K[b]
        r = R[b]
        v = U0[b]
        u = _clip(v, umin, umax)
        XS[b, 0, :] = x
        US[b, 0] = u
        VS[b, 0] = v
        y = _poly_g(gc, gp, x)
        for i in range(nsteps):
            off0 = y_offset if (i >= fault_on and i < fault_off) else 0.0
            off1 = y_offset if (i + 1 >= fault_on and i + 1 < fault_off) else 0.0
            w0 = k * (r - (y + off0))
            if mode == MODE_SATURATING:
                s0 = _sat_rhs(u, w0, umin, umax)
                u_pred = _clip(u + dt * s0, umin, umax)
            else:
                v_pred = v + dt * w0
                u_pred = _clip(v_pred, umin, umax)
            _rk4(fc, fp, fr, x, u, 0.5 * (u + u_pred), u_pred, dt, k1, k2, k3, k4, tmp)
            if _blown_up(x, guard):
                div[b] = i + 1
                break
            y = _poly_g(gc, gp, x)
            w1 = k * (r - (y + off1))
            if mode == MODE_SATURATING:
                s1 = _sat_rhs(u_pred, w1, umin, umax)
                u = _clip(u + 0.5 * dt * (s0 + s1), umin, umax)
                v = u
            else:
                v = v + 0.5 * dt * (w0 + w1)
                u = _clip(v, umin, umax)
            if (i + 1) % stride == 0:
                j = (i + 1) // stride
                XS[b, j, :] = x
                US[b, j] = u
                VS[b, j] = v
    return XS, US, VS, div
