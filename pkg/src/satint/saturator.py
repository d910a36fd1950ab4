"""The saturating integrator as a standalone dynamical system.

The integrator obeys ``du/dt = S(u, w)`` where ``S`` passes ``w`` in the
interior of ``[u_min, u_max]``, only its positive part at the lower bound and
only its negative part at the upper bound.  Trajectories are produced by
projected explicit Euler: advance, then clamp back onto the interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True)
class SaturatorSpec:
    u_min: float
    u_max: float

    def __post_init__(self):
        if not (np.isfinite(self.u_min) and np.isfinite(self.u_max)):
            raise InvalidArgument("saturation bounds must be finite")
        if not self.u_min < self.u_max:
            raise InvalidArgument(f"need u_min < u_max, got [{self.u_min}, {self.u_max}]")

    @property
    def width(self) -> float:
        return self.u_max - self.u_min

    def clamp(self, u):
        return np.minimum(np.maximum(u, self.u_min), self.u_max)

    def contains(self, u) -> bool:
        u = np.asarray(u)
        return bool(np.all((u >= self.u_min) & (u <= self.u_max)))

    def initial_state(self, u: float) -> "SaturatorState":
        if not self.u_min <= u <= self.u_max:
            raise InvalidArgument(f"initial u={u} outside [{self.u_min}, {self.u_max}]")
        return SaturatorState(float(u))


@dataclass(frozen=True)
class SaturatorState:
    u: float


def eval_S(spec: SaturatorSpec, u, w):
    """Right-hand side of the saturating integrator.

    Works elementwise on arrays.  At ``u <= u_min`` only ``max(w, 0)`` passes,
    at ``u >= u_max`` only ``min(w, 0)``; the boundary branch wins ties.
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    out = np.where(u <= spec.u_min, np.maximum(w, 0.0), w)
    out = np.where(u >= spec.u_max, np.minimum(w, 0.0), out)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class SampledSignal:
    """A scalar signal sampled on the uniform grid ``t_i = i * dt``."""

    values: np.ndarray
    dt: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise InvalidArgument("a sampled signal needs at least two samples")
        if not self.dt > 0:
            raise InvalidArgument("signal sample spacing must be positive")
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> float:
        return (self.values.size - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], horizon: float, dt: float):
        n = int(round(horizon / dt))
        t = np.arange(n + 1) * dt
        return cls(np.broadcast_to(np.asarray(fn(t), dtype=float), t.shape).copy(), dt)

    @classmethod
    def piecewise_constant(cls, breaks, levels, horizon: float, dt: float):
        """Signal equal to ``levels[j]`` on ``[breaks[j], breaks[j+1])``."""
        breaks = np.asarray(breaks, dtype=float)
        levels = np.asarray(levels, dtype=float)
        if breaks.size != levels.size:
            raise InvalidArgument("need one level per break point")
        n = int(round(horizon / dt))
        t = np.arange(n + 1) * dt
        idx = np.clip(np.searchsorted(breaks, t, side="right") - 1, 0, levels.size - 1)
        return cls(levels[idx], dt)


Signal = Union[SampledSignal, Callable[[float], float], float]


def _sample(w_signal: Signal, t: float) -> float:
    if callable(w_signal):
        return float(w_signal(t))
    return float(w_signal)


def step(state: SaturatorState, spec: SaturatorSpec, w_signal: Signal, dt: float,
         t: float = 0.0) -> SaturatorState:
    """Advance the integrator by one projected Euler step of length ``dt``."""
    if not dt > 0:
        raise InvalidArgument(f"step size must be positive, got {dt}")
    w = _sample(w_signal, t)
    u = state.u + dt * eval_S(spec, state.u, w)
    return SaturatorState(float(spec.clamp(u)))


def integrate(spec: SaturatorSpec, u0, w_values, dt: float) -> np.ndarray:
    """Run the projected Euler scheme over whole sample sequences.

    ``w_values`` has time along its last axis; leading axes are independent
    integrators (``u0`` broadcasts against them).  Returns the states at every
    sample time, same shape as ``w_values``.
    """
    if not dt > 0:
        raise InvalidArgument(f"step size must be positive, got {dt}")
    w_values = np.asarray(w_values, dtype=float)
    u = np.broadcast_to(np.asarray(u0, dtype=float), w_values.shape[:-1]).copy()
    out = np.empty_like(w_values)
    out[..., 0] = u
    for i in range(w_values.shape[-1] - 1):
        u = spec.clamp(u + dt * eval_S(spec, u, w_values[..., i]))
        out[..., i + 1] = u
    return out


@dataclass(frozen=True)
class L1Report:
    lhs: float
    rhs: float
    slack: float
    holds: bool


def l1_deviation_bound_batch(spec: SaturatorSpec, u1_0, u2_0, w1, w2, dt: float,
                             slack=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized L1 comparison over pairs stacked along the leading axis.

    Returns ``(lhs, rhs, slack)`` arrays; see :func:`l1_deviation_bound_check`.
    """
    w1 = np.atleast_2d(np.asarray(w1, dtype=float))
    w2 = np.atleast_2d(np.asarray(w2, dtype=float))
    if w1.shape != w2.shape:
        raise InvalidArgument("signals must share sample grid and horizon")
    u1_0 = np.broadcast_to(np.asarray(u1_0, dtype=float), w1.shape[:1])
    u2_0 = np.broadcast_to(np.asarray(u2_0, dtype=float), w1.shape[:1])
    u = integrate(spec, np.concatenate([u1_0, u2_0]), np.concatenate([w1, w2]), dt)
    B = w1.shape[0]
    lhs = np.max(np.abs(u[B:] - u[:B]), axis=1)
    rhs = np.abs(u2_0 - u1_0) + np.trapezoid(np.abs(w2 - w1), dx=dt, axis=1)
    if slack is None:
        slack = 4.0 * dt * np.maximum(np.max(np.abs(w1), axis=1), np.max(np.abs(w2), axis=1))
    return lhs, rhs, np.broadcast_to(np.asarray(slack, dtype=float), lhs.shape)


def l1_deviation_bound_check(spec: SaturatorSpec, u1_0: float, u2_0: float,
                             w1: SampledSignal, w2: SampledSignal, horizon: float,
                             slack: float | None = None) -> L1Report:
    """Compare ``sup |u2 - u1|`` with ``|u2(0) - u1(0)| + int |w2 - w1|``.

    The integral uses trapezoid quadrature of the samples.  ``slack`` defaults
    to ``4 * dt * max|w|``, which covers the gap between the trapezoid rule
    and the left Riemann sum the Euler scheme actually accumulates.
    """
    if w1.values.size != w2.values.size or not np.isclose(w1.dt, w2.dt):
        raise InvalidArgument("signals must share sample grid and horizon")
    if not np.isclose(w1.horizon, horizon, rtol=1e-9, atol=1e-12):
        raise InvalidArgument(f"signal horizon {w1.horizon} does not match requested {horizon}")
    lhs, rhs, sl = l1_deviation_bound_batch(spec, u1_0, u2_0, w1.values, w2.values, w1.dt, slack)
    lhs, rhs, sl = float(lhs[0]), float(rhs[0]), float(sl[0])
    return L1Report(lhs=lhs, rhs=rhs, slack=sl, holds=lhs <= rhs + sl)
