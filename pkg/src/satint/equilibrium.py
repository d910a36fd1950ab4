"""Equilibrium map Xi(u), steady-state map G = g o Xi, and the constants alpha, mu.

The map is built by Newton continuation on a uniform grid of constant inputs.
Between grid nodes both Xi and G are interpolated piecewise linearly, which
keeps G monotone.  alpha and mu are grid difference quotients, i.e. sampled
estimates of the Lipschitz bound of Xi and of the monotonicity margin of G.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (Assumption2Violated, Diverged, EquilibriumNotFound, InvalidArgument,
                     ReferenceOutOfRange)
from .plant import PlantModel, jacobian_x, simulate_constant_input
from .saturator import SaturatorSpec

log = logging.getLogger(__name__)

TOL_NEWTON = 1e-10
MAX_ITER = 50
MAX_HALVINGS = 20


def _residual(plant, x, u):
    return float(np.max(np.abs(plant.f(x, u))))


def solve_equilibrium(plant: PlantModel, u0: float, x_guess=None, tol: float = TOL_NEWTON,
                      max_iter: int = MAX_ITER, spec: SaturatorSpec | None = None) -> np.ndarray:
    """Damped Newton iteration for ``f(x, u0) = 0`` starting at ``x_guess``.

    Each Newton step is halved (up to 20 times) until the residual
    ``||f||_inf`` decreases; if no halving helps the solve fails.
    """
    if spec is not None and not spec.u_min <= u0 <= spec.u_max:
        raise InvalidArgument(f"u0={u0} outside [{spec.u_min}, {spec.u_max}]")
    x = np.zeros(plant.n) if x_guess is None else np.array(x_guess, dtype=float).reshape(plant.n)
    u0 = float(u0)
    res = _residual(plant, x, u0)
    for _ in range(max_iter):
        if res < tol:
            return x
        F = plant.f(x, u0)
        J = jacobian_x(plant, x, u0)
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(J, -F, rcond=None)[0]
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            xn = x + lam * dx
            rn = _residual(plant, xn, u0)
            if rn < res:
                break
            lam *= 0.5
        else:
            raise EquilibriumNotFound(u0, res)
        x, res = xn, rn
    if res < tol:
        return x
    raise EquilibriumNotFound(u0, res)


@dataclass(frozen=True)
class ShiftedGain:
    """``v -> G(v + u_r) - r`` on ``[u_min - u_r, u_max - u_r]``; zero at the origin."""

    emap: "EquilibriumMap" = field(repr=False)
    u_r: float
    r: float

    @property
    def domain(self) -> tuple[float, float]:
        return (self.emap.spec.u_min - self.u_r, self.emap.spec.u_max - self.u_r)

    def __call__(self, v):
        return self.emap.G(np.asarray(v, dtype=float) + self.u_r) - self.r

    def inverse(self, w):
        return self.emap.G_inverse(np.asarray(w, dtype=float) + self.r) - self.u_r


@dataclass(frozen=True)
class EquilibriumMap:
    u_grid: np.ndarray
    xi_values: np.ndarray
    g_values: np.ndarray
    alpha: float
    mu: float
    spec: SaturatorSpec
    jumps: tuple = ()

    @property
    def n(self) -> int:
        return self.xi_values.shape[1]

    @property
    def y_min(self) -> float:
        return float(self.g_values[0])

    @property
    def y_max(self) -> float:
        return float(self.g_values[-1])

    def xi(self, u) -> np.ndarray:
        """Interpolated equilibrium; shape ``u.shape + (n,)``."""
        u = np.asarray(u, dtype=float)
        cols = [np.interp(u, self.u_grid, self.xi_values[:, j]) for j in range(self.n)]
        return np.stack(cols, axis=-1)

    def G(self, u):
        out = np.interp(np.asarray(u, dtype=float), self.u_grid, self.g_values)
        return float(out) if np.ndim(out) == 0 else out

    def G_inverse(self, y):
        out = np.interp(np.asarray(y, dtype=float), self.g_values, self.u_grid)
        return float(out) if np.ndim(out) == 0 else out

    def check_reference(self, r: float) -> None:
        if not self.y_min < r < self.y_max:
            raise ReferenceOutOfRange(r, self.y_min, self.y_max)

    def invert_G(self, r: float) -> float:
        self.check_reference(r)
        return float(self.G_inverse(r))

    def shifted_gain(self, u_r: float, r: float | None = None) -> ShiftedGain:
        return ShiftedGain(self, float(u_r), float(self.G(u_r) if r is None else r))


def invert_G(emap: EquilibriumMap, r: float) -> float:
    return emap.invert_G(r)


def shifted_gain(emap: EquilibriumMap, u_r: float) -> ShiftedGain:
    return emap.shifted_gain(u_r)


def _initial_solve(plant, u0, x_guess):
    try:
        return solve_equilibrium(plant, u0, x_guess)
    except EquilibriumNotFound as first:
        # settle the stable plant from the guess, then polish
        try:
            traj = simulate_constant_input(plant, x_guess, u0, horizon=50.0, dt=1e-2, stride=5000)
        except Diverged:
            raise first from None
        return solve_equilibrium(plant, u0, traj.final_state)


def build_map(plant: PlantModel, spec: SaturatorSpec, grid_size: int = 201, x_guess=None,
              direction: str = "up") -> EquilibriumMap:
    """Continuation over ``grid_size`` uniform inputs in ``[u_min, u_max]``.

    ``direction="down"`` marches from ``u_max`` instead of ``u_min``.
    """
    if grid_size < 2:
        raise InvalidArgument("grid_size must be at least 2")
    if direction not in ("up", "down"):
        raise InvalidArgument("direction must be 'up' or 'down'")
    u_grid = np.linspace(spec.u_min, spec.u_max, grid_size)
    order = range(grid_size) if direction == "up" else range(grid_size - 1, -1, -1)
    xi = np.empty((grid_size, plant.n))
    guess = np.zeros(plant.n) if x_guess is None else np.asarray(x_guess, dtype=float)
    first = True
    for i in order:
        x = _initial_solve(plant, u_grid[i], guess) if first else solve_equilibrium(plant, u_grid[i], guess)
        xi[i] = x
        guess = x
        first = False

    g_values = np.asarray(plant.g(xi), dtype=float)
    du = np.diff(u_grid)
    dG = np.diff(g_values)
    bad = np.flatnonzero(dG <= 0)
    if bad.size:
        i = int(bad[0])
        raise Assumption2Violated((u_grid[i], u_grid[i + 1]), dG[i])
    xi_slopes = np.max(np.abs(np.diff(xi, axis=0)), axis=1) / du
    alpha = float(np.max(xi_slopes))
    mu = 0.5 * float(np.min(dG / du))

    jumps = ()
    typical = float(np.median(xi_slopes))
    if typical > 0:
        idx = np.flatnonzero(xi_slopes > 10.0 * typical)
        jumps = tuple((float(u_grid[i]), float(u_grid[i + 1])) for i in idx)
        for a, b in jumps:
            log.warning("equilibrium branch jump suspected on [%.6g, %.6g]", a, b)
    return EquilibriumMap(u_grid=u_grid, xi_values=xi, g_values=g_values, alpha=alpha, mu=mu,
                          spec=spec, jumps=jumps)


def equilibrium_at(plant: PlantModel, emap: EquilibriumMap, u0: float) -> np.ndarray:
    """Newton-polished equilibrium at an arbitrary input, seeded by interpolation."""
    return solve_equilibrium(plant, u0, emap.xi(u0))


def equilibria(plant: PlantModel, emap: EquilibriumMap, u_values) -> np.ndarray:
    """Vectorized :func:`equilibrium_at` over an array of inputs; shape ``u.shape + (n,)``."""
    u = np.asarray(u_values, dtype=float)
    flat = u.reshape(-1)
    x = emap.xi(flat)
    if plant.jac_x is not None and flat.size:
        for _ in range(8):
            F = plant.f(x, flat)
            if np.max(np.abs(F)) < TOL_NEWTON:
                break
            J = plant.jac_x(x, flat)
            try:
                x = x - np.linalg.solve(J, F[..., None])[..., 0]
            except np.linalg.LinAlgError:
                break
    res = np.max(np.abs(plant.f(x, flat)), axis=-1) if flat.size else np.zeros(0)
    for i in np.flatnonzero(~(res < TOL_NEWTON)):
        x[i] = equilibrium_at(plant, emap, flat[i])
    return x.reshape(u.shape + (plant.n,))
