"""Closed loop: plant, saturating integrator, and feedback ``w = k (r - y)``.

Diagnostics recorded along a run:

* ``eta = y - G(u)``, the gap between output and its steady-state value;
* ``V = (u - u_r)^2 / 2``;
* the shifted coordinates ``xi = x - Xi(u)`` and ``wcoord = G(u) - r``,
  in which the set point sits at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, _parallel
from .equilibrium import EquilibriumMap
from .errors import Diverged, InvalidArgument
from .plant import BLOWUP_GUARD, PlantModel, _rk4_numpy, step_count
from .saturator import SaturatorSpec

MODES = {"saturating": _kernels.MODE_SATURATING, "clamped": _kernels.MODE_CLAMPED}


@dataclass(frozen=True)
class Fault:
    """Additive measurement offset on ``[t_on, t_off)``."""

    t_on: float
    t_off: float
    y_offset: float

    @property
    def duration(self) -> float:
        return self.t_off - self.t_on


@dataclass(frozen=True)
class ClosedLoopConfig:
    plant: PlantModel
    spec: SaturatorSpec
    k: float
    r: float
    x0: np.ndarray
    u0: float
    dt: float = 1e-3
    horizon: float = 100.0
    stride: int = 1

    def validate(self, emap: EquilibriumMap) -> None:
        if not self.k > 0:
            raise InvalidArgument(f"gain k must be positive, got {self.k}")
        if not self.spec.u_min <= self.u0 <= self.spec.u_max:
            raise InvalidArgument(f"u0={self.u0} outside [{self.spec.u_min}, {self.spec.u_max}]")
        if np.shape(np.atleast_1d(self.x0)) != (self.plant.n,):
            raise InvalidArgument(f"x0 must have {self.plant.n} components")
        emap.check_reference(self.r)


@dataclass(frozen=True)
class ClosedLoopRecord:
    t: float
    x: np.ndarray
    u: float
    y: float
    eta: float
    V: float
    xi: np.ndarray
    w_coord: float


@dataclass(frozen=True)
class ClosedLoopRun:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    y: np.ndarray
    eta: np.ndarray
    V: np.ndarray
    xi: np.ndarray
    wcoord: np.ndarray
    k: float
    r: float
    u_r: float

    def __len__(self) -> int:
        return self.t.size

    def record(self, i: int) -> ClosedLoopRecord:
        return ClosedLoopRecord(float(self.t[i]), self.x[i], float(self.u[i]), float(self.y[i]),
                                float(self.eta[i]), float(self.V[i]), self.xi[i],
                                float(self.wcoord[i]))

    def records(self) -> list[ClosedLoopRecord]:
        return [self.record(i) for i in range(len(self))]


def _closed_loop_numpy(plant, X0, U0, K, R, umin, umax, dt, nsteps, stride, guard, mode,
                       fault_on, fault_off, y_offset):
    B, n = X0.shape
    M = nsteps // stride + 1
    XS = np.full((B, M, n), np.nan)
    US = np.full((B, M), np.nan)
    VS = np.full((B, M), np.nan)
    div = np.full(B, -1, dtype=np.int64)
    x = X0.copy()
    v = U0.copy()
    u = np.clip(v, umin, umax)
    XS[:, 0], US[:, 0], VS[:, 0] = x, u, v
    alive = np.ones(B, dtype=bool)
    y = plant.g(x)

    def sat(u_, w_):
        out = np.where(u_ <= umin, np.maximum(w_, 0.0), w_)
        return np.where(u_ >= umax, np.minimum(w_, 0.0), out)

    with np.errstate(all="ignore"):
        for i in range(nsteps):
            off0 = y_offset if fault_on <= i < fault_off else 0.0
            off1 = y_offset if fault_on <= i + 1 < fault_off else 0.0
            w0 = K * (R - (y + off0))
            if mode == _kernels.MODE_SATURATING:
                s0 = sat(u, w0)
                u_pred = np.clip(u + dt * s0, umin, umax)
            else:
                u_pred = np.clip(v + dt * w0, umin, umax)
            xn = _rk4_numpy(plant, x, u, 0.5 * (u + u_pred), u_pred, dt)
            bad = alive & ~np.all(np.abs(xn) <= guard, axis=1)
            div[bad] = i + 1
            alive &= ~bad
            yn = plant.g(xn)
            w1 = K * (R - (yn + off1))
            if mode == _kernels.MODE_SATURATING:
                un = np.clip(u + 0.5 * dt * (s0 + sat(u_pred, w1)), umin, umax)
                vn = un
            else:
                vn = v + 0.5 * dt * (w0 + w1)
                un = np.clip(vn, umin, umax)
            x = np.where(alive[:, None], xn, x)
            u, v, y = np.where(alive, un, u), np.where(alive, vn, v), np.where(alive, yn, y)
            if (i + 1) % stride == 0:
                j = (i + 1) // stride
                XS[alive, j], US[alive, j], VS[alive, j] = x[alive], u[alive], v[alive]
            if not alive.any():
                break
    return XS, US, VS, div


def simulate_batch(plant: PlantModel, spec: SaturatorSpec, X0, U0, K, R, dt: float, nsteps: int,
                   stride: int = 1, mode: str = "saturating", fault: Fault | None = None,
                   guard: float = BLOWUP_GUARD):
    """Raw closed-loop arrays for a batch of independent runs.

    ``X0`` is (B, n); ``U0``, ``K`` and ``R`` broadcast to (B,).  Returns
    ``(states, inputs, integrator_states, diverged_step)`` recorded every
    ``stride`` steps.  In ``"clamped"`` mode the integrator state is unbounded
    and the plant sees its clamp.
    """
    X0 = np.ascontiguousarray(np.atleast_2d(np.asarray(X0, dtype=float)))
    B = X0.shape[0]
    U0 = np.ascontiguousarray(np.broadcast_to(np.asarray(U0, dtype=float), (B,)))
    K = np.ascontiguousarray(np.broadcast_to(np.asarray(K, dtype=float), (B,)))
    R = np.ascontiguousarray(np.broadcast_to(np.asarray(R, dtype=float), (B,)))
    if mode not in MODES:
        raise InvalidArgument(f"mode must be one of {sorted(MODES)}")
    if mode == "saturating" and not spec.contains(U0):
        raise InvalidArgument("initial integrator states must lie in [u_min, u_max]")
    if fault is not None:
        on, off, offset = int(round(fault.t_on / dt)), int(round(fault.t_off / dt)), float(fault.y_offset)
    else:
        on, off, offset = 0, 0, 0.0
    args = (float(spec.u_min), float(spec.u_max), float(dt), int(nsteps), int(stride), float(guard),
            MODES[mode], on, off, offset)
    if plant.poly is None:
        return _closed_loop_numpy(plant, X0, U0, K, R, *args)
    p = plant.poly

    def run(lo, hi):
        return _kernels.closed_loop(p.f_coef, p.f_pow, p.f_row, p.g_coef, p.g_pow,
                                    X0[lo:hi], U0[lo:hi], K[lo:hi], R[lo:hi], *args)

    parts = _parallel.run_chunked(run, B)
    return tuple(np.concatenate([part[i] for part in parts]) for i in range(4))


def diagnostics(plant: PlantModel, emap: EquilibriumMap, t, x, u, v, k: float, r: float,
                u_r: float | None = None) -> ClosedLoopRun:
    u_r = emap.invert_G(r) if u_r is None else u_r
    y = plant.g(x)
    G = emap.G(u)
    return ClosedLoopRun(t=t, x=x, u=u, v=v, y=y, eta=y - G, V=0.5 * (u - u_r) ** 2,
                         xi=x - emap.xi(u), wcoord=G - r, k=float(k), r=float(r), u_r=float(u_r))


def simulate_closed_loop(cfg: ClosedLoopConfig, emap: EquilibriumMap, mode: str = "saturating",
                         fault: Fault | None = None) -> ClosedLoopRun:
    """One closed-loop run with per-record diagnostics.

    Raises :class:`Diverged` if the plant state blows up.
    """
    cfg.validate(emap)
    nsteps = step_count(cfg.horizon, cfg.dt)
    XS, US, VS, div = simulate_batch(cfg.plant, cfg.spec, np.atleast_1d(cfg.x0)[None], cfg.u0, cfg.k,
                                     cfg.r, cfg.dt, nsteps, cfg.stride, mode, fault)
    if div[0] >= 0:
        raise Diverged(div[0] * cfg.dt)
    t = np.arange(XS.shape[1]) * cfg.dt * cfg.stride
    return diagnostics(cfg.plant, emap, t, XS[0], US[0], VS[0], cfg.k, cfg.r)


@dataclass(frozen=True)
class TrackingMetrics:
    settle_time: float
    overshoot: float
    final_error: float
    u_excursion: float


def settle_time(t, err, tol: float) -> float:
    """First time after which ``err <= tol`` for the rest of the record; inf if never."""
    bad = np.flatnonzero(~(np.asarray(err) <= tol))
    if bad.size == 0:
        return float(t[0])
    if bad[-1] == len(t) - 1:
        return float("inf")
    return float(t[bad[-1] + 1])


def tracking_metrics(run: ClosedLoopRun, tol: float = 1e-2) -> TrackingMetrics:
    if len(run) == 0:
        raise InvalidArgument("empty run")
    err = run.y - run.r
    step = run.r - run.y[0]
    if step != 0:
        overshoot = float(max(0.0, np.max(np.sign(step) * err)) / abs(step))
    else:
        overshoot = 0.0
    return TrackingMetrics(
        settle_time=settle_time(run.t, np.abs(err), tol),
        overshoot=overshoot,
        final_error=float(abs(err[-1])),
        u_excursion=float(np.max(np.abs(run.u - run.u_r))),
    )


@dataclass(frozen=True)
class WindupComparison:
    saturating: ClosedLoopRun
    clamped: ClosedLoopRun
    fault: Fault
    tol: float
    recovery_saturating: float
    recovery_clamped: float
    metrics_saturating: TrackingMetrics
    metrics_clamped: TrackingMetrics

    windup: float
    """Largest excursion of the plain integrator's state beyond ``[u_min, u_max]``."""


def recovery_time(run: ClosedLoopRun, t_off: float, tol: float) -> float:
    after = run.t >= t_off - 1e-12
    return settle_time(run.t[after], np.abs(run.y[after] - run.r), tol) - run.t[after][0]


def compare_windup(cfg: ClosedLoopConfig, emap: EquilibriumMap, fault: Fault,
                   tol: float | None = None) -> WindupComparison:
    """Same faulted scenario under the saturating integrator and a clamped-output integrator.

    Recovery time is measured from the end of the fault until ``|y - r|``
    stays within ``tol`` (default ``1e-3 * (y_max - y_min)``).
    """
    if not 0 <= fault.t_on <= fault.t_off <= cfg.horizon:
        raise InvalidArgument("fault window must lie inside the horizon")
    tol = 1e-3 * (emap.y_max - emap.y_min) if tol is None else tol
    sat = simulate_closed_loop(cfg, emap, "saturating", fault)
    clp = simulate_closed_loop(cfg, emap, "clamped", fault)
    return WindupComparison(
        saturating=sat, clamped=clp, fault=fault, tol=tol,
        recovery_saturating=recovery_time(sat, fault.t_off, tol),
        recovery_clamped=recovery_time(clp, fault.t_off, tol),
        metrics_saturating=tracking_metrics(sat, tol),
        metrics_clamped=tracking_metrics(clp, tol),
        windup=float(max(0.0, np.max(clp.v) - cfg.spec.u_max, cfg.spec.u_min - np.min(clp.v))),
    )


def tol_dt(dt: float, k: float) -> float:
    """Slack for discrete versions of continuous-time inequalities."""
    return 10.0 * dt * (1.0 + k)


@dataclass(frozen=True)
class LyapunovReport:
    eta_star: float
    checked_points: int
    decrease_violations: int
    decay_violations: int
    envelope_violations: int
    excess_interval_end: float

    @property
    def ok(self) -> bool:
        return not (self.decrease_violations or self.decay_violations or self.envelope_violations)


def check_lyapunov(run: ClosedLoopRun, emap: EquilibriumMap, dt: float | None = None) -> LyapunovReport:
    """Discrete checks of the integrator Lyapunov inequalities along a run.

    With ``eta* = sup |eta|`` over the run and ``mu``, ``k`` from the map and
    run: wherever ``|G(u) - r| > 2 eta*`` the forward difference of ``V``
    obeys ``dV/dt <= -2 mu k V + tol``; on the initial interval where that
    excess holds, ``|u - u_r| <= exp(-mu k t) |u(0) - u_r| (1 + tol)``; and
    everywhere ``|G(u) - r| <= max(|G_r(exp(-mu k t)(u(0) - u_r))|, 2 eta*) (1 + tol)``.
    """
    dt = float(run.t[1] - run.t[0]) if dt is None else dt
    tol = tol_dt(dt, run.k)
    mu, k = emap.mu, run.k
    eta_star = float(np.max(np.abs(run.eta)))
    gap = np.abs(run.wcoord)
    excess = gap > 2.0 * eta_star

    dVdt = np.diff(run.V) / np.diff(run.t)
    pts = excess[:-1]
    dec_bad = int(np.sum(dVdt[pts] > -2.0 * mu * k * run.V[:-1][pts] + tol))

    not_excess = np.flatnonzero(~excess)
    end = not_excess[0] if not_excess.size else len(run)
    e0 = abs(run.u[0] - run.u_r)
    decay = np.exp(-mu * k * run.t[:end]) * e0 * (1.0 + tol)
    decay_bad = int(np.sum(np.abs(run.u[:end] - run.u_r) > decay + 1e-12))

    Gr = emap.shifted_gain(run.u_r, run.r)
    v_env = np.exp(-mu * k * run.t) * (run.u[0] - run.u_r)
    bound = np.maximum(np.abs(Gr(v_env)), 2.0 * eta_star) * (1.0 + tol)
    env_bad = int(np.sum(gap > bound + 1e-12))
    return LyapunovReport(eta_star=eta_star, checked_points=int(pts.sum()),
                          decrease_violations=dec_bad, decay_violations=decay_bad,
                          envelope_violations=env_bad,
                          excess_interval_end=float(run.t[end - 1]) if end else 0.0)


def log_error_slope(run: ClosedLoopRun, floor: float = 1e-10, t_from: float = 0.0) -> float:
    """Least-squares slope of ``log ||(xi, wcoord)||_inf`` against time.

    Points below ``floor`` (numerical noise) are dropped.
    """
    z = np.maximum(np.max(np.abs(run.xi), axis=1), np.abs(run.wcoord))
    keep = (z > floor) & (run.t >= t_from)
    if keep.sum() < 2:
        return float("-inf")
    return float(np.polyfit(run.t[keep], np.log(z[keep]), 1)[0])
