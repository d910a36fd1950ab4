"""Open-loop SISO plants ``x' = f(x, u)``, ``y = g(x)``.

Plants whose right-hand sides are polynomials carry a compiled fast path;
any other vectorized callables run through an equivalent numpy loop.
Callables follow the batch convention ``f(x[..., n], u[...]) -> [..., n]`` and
``g(x[..., n]) -> [...]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels, _parallel
from .errors import Diverged, InvalidArgument

BLOWUP_GUARD = 1e9


def _term_arrays(terms, width):
    coef = np.array([float(c) for c, _ in terms], dtype=float)
    pw = np.array([list(p) for _, p in terms], dtype=np.int64).reshape(len(terms), width)
    if np.any(pw < 0):
        raise InvalidArgument("monomial powers must be nonnegative")
    return coef, pw


class PolynomialSystem:
    """Polynomial vector field and readout, stored as monomial tables.

    ``f_terms[i]`` lists ``(coeff, powers)`` pairs for coordinate ``i`` with
    ``powers`` of length ``n + 1`` (the last entry is the power of ``u``);
    ``g_terms`` uses powers of length ``n``.
    """

    def __init__(self, n: int, f_terms: Sequence[Sequence[tuple]], g_terms: Sequence[tuple]):
        if len(f_terms) != n:
            raise InvalidArgument(f"need {n} right-hand-side components, got {len(f_terms)}")
        self.n = n
        flat, rows = [], []
        for i, comp in enumerate(f_terms):
            for c, p in comp:
                if len(p) != n + 1:
                    raise InvalidArgument(f"f monomial powers must have length {n + 1}, got {list(p)}")
                flat.append((c, p))
                rows.append(i)
        g_flat = []
        for c, p in g_terms:
            p = list(p)
            if len(p) == n + 1:
                if p[-1] != 0:
                    raise InvalidArgument("the readout g may not depend on u")
                p = p[:-1]
            if len(p) != n:
                raise InvalidArgument(f"g monomial powers must have length {n}, got {p}")
            g_flat.append((c, p))
        if not flat:
            flat, rows = [(0.0, [0] * (n + 1))], [0]
        if not g_flat:
            raise InvalidArgument("the readout g needs at least one monomial")
        self.f_coef, self.f_pow = _term_arrays(flat, n + 1)
        self.f_row = np.array(rows, dtype=np.int64)
        self.g_coef, self.g_pow = _term_arrays(g_flat, n)
        self.f_terms = [[(float(c), tuple(int(q) for q in p)) for c, p in comp] for comp in f_terms]
        self.g_terms = [(float(c), tuple(int(q) for q in p)) for c, p in g_flat]

    @staticmethod
    def _monomials(coef, pw, x, u=None):
        # (..., T) values of every monomial
        vals = np.broadcast_to(coef, x.shape[:-1] + coef.shape).copy()
        n = x.shape[-1]
        for j in range(n):
            p = pw[:, j]
            if np.any(p):
                vals *= x[..., j, None] ** p
        if u is not None and np.any(pw[:, n]):
            vals *= u[..., None] ** pw[:, n]
        return vals

    def f(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.broadcast_to(np.asarray(u, dtype=float), x.shape[:-1])
        vals = self._monomials(self.f_coef, self.f_pow, x, u)
        out = np.zeros(x.shape)
        for i in range(self.n):
            out[..., i] = vals[..., self.f_row == i].sum(axis=-1)
        return out

    def g(self, x):
        x = np.asarray(x, dtype=float)
        return self._monomials(self.g_coef, self.g_pow, x).sum(axis=-1)

    def _diff(self, coef, pw, col):
        p = pw[:, col]
        keep = p > 0
        dpw = pw[keep].copy()
        dpw[:, col] -= 1
        return coef[keep] * p[keep], dpw, keep

    def jac_x(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.broadcast_to(np.asarray(u, dtype=float), x.shape[:-1])
        out = np.zeros(x.shape + (self.n,))
        for j in range(self.n):
            dc, dpw, keep = self._diff(self.f_coef, self.f_pow, j)
            if dc.size == 0:
                continue
            vals = self._monomials(dc, dpw, x, u)
            rows = self.f_row[keep]
            for i in range(self.n):
                out[..., i, j] = vals[..., rows == i].sum(axis=-1)
        return out

    def jac_u(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.broadcast_to(np.asarray(u, dtype=float), x.shape[:-1])
        out = np.zeros(x.shape)
        dc, dpw, keep = self._diff(self.f_coef, self.f_pow, self.n)
        if dc.size:
            vals = self._monomials(dc, dpw, x, u)
            rows = self.f_row[keep]
            for i in range(self.n):
                out[..., i] = vals[..., rows == i].sum(axis=-1)
        return out

    def grad_g(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for j in range(self.n):
            dc, dpw, _ = self._diff(self.g_coef, self.g_pow, j)
            if dc.size:
                out[..., j] = self._monomials(dc, dpw, x).sum(axis=-1)
        return out


@dataclass(frozen=True)
class PlantModel:
    name: str
    n: int
    f: Callable
    g: Callable
    jac_x: Callable | None = None
    jac_u: Callable | None = None
    grad_g: Callable | None = None
    poly: PolynomialSystem | None = field(default=None, repr=False, compare=False)
    u_bounds: tuple[float, float] = (-1.0, 1.0)

    @classmethod
    def from_polynomial(cls, name: str, n: int, f_terms, g_terms,
                        u_bounds: tuple[float, float] = (-1.0, 1.0)) -> "PlantModel":
        poly = PolynomialSystem(n, f_terms, g_terms)
        return cls(name=name, n=n, f=poly.f, g=poly.g, jac_x=poly.jac_x, jac_u=poly.jac_u,
                   grad_g=poly.grad_g, poly=poly, u_bounds=tuple(map(float, u_bounds)))

    def generic(self) -> "PlantModel":
        """The same plant with the compiled path and analytic derivatives stripped."""
        return replace(self, poly=None, jac_x=None, jac_u=None, grad_g=None)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise InvalidArgument("trajectory times must be strictly increasing")
        m = len(self.times)
        if not (len(self.states) == len(self.inputs) == len(self.outputs) == m):
            raise InvalidArgument("trajectory sequences must have equal length")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _as_state(plant: PlantModel, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (plant.n,):
        raise InvalidArgument(f"state must have {plant.n} components, got shape {x.shape}")
    return x


def step_count(horizon: float, dt: float) -> int:
    if not horizon > 0:
        raise InvalidArgument(f"horizon must be positive, got {horizon}")
    if not dt > 0:
        raise InvalidArgument(f"step size must be positive, got {dt}")
    return max(1, int(round(horizon / dt)))


def _rk4_numpy(plant, x, ua, um, ub, dt):
    k1 = plant.f(x, ua)
    k2 = plant.f(x + 0.5 * dt * k1, um)
    k3 = plant.f(x + 0.5 * dt * k2, um)
    k4 = plant.f(x + dt * k3, ub)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _open_loop_numpy(plant, X0, U, dt, nsteps, stride, guard):
    B, n = X0.shape
    M = nsteps // stride + 1
    XS = np.full((B, M, n), np.nan)
    div = np.full(B, -1, dtype=np.int64)
    x = X0.copy()
    XS[:, 0] = x
    alive = np.ones(B, dtype=bool)
    const = U.shape[1] == 1
    with np.errstate(all="ignore"):
        for i in range(nsteps):
            ua = U[:, 0] if const else U[:, i]
            ub = ua if const else U[:, i + 1]
            xn = _rk4_numpy(plant, x, ua, 0.5 * (ua + ub), ub, dt)
            bad = alive & ~np.all(np.abs(xn) <= guard, axis=1)
            div[bad] = i + 1
            alive &= ~bad
            x = np.where(alive[:, None], xn, x)
            if (i + 1) % stride == 0:
                XS[alive, (i + 1) // stride] = x[alive]
            if not alive.any():
                break
    return XS, div


def open_loop_batch(plant: PlantModel, X0, U, dt: float, nsteps: int, stride: int = 1,
                    guard: float = BLOWUP_GUARD):
    """Batch of fixed-step RK4 plant trajectories.

    ``X0`` is (B, n).  ``U`` is (B,) or (B, 1) for constant inputs, or
    (B, nsteps + 1) for inputs sampled on the step grid.  Returns
    ``(states, diverged_step)`` with states recorded every ``stride`` steps as
    a (B, nsteps // stride + 1, n) array (NaN after divergence) and the step
    index at which the blow-up guard tripped (-1 if never).
    """
    X0 = np.ascontiguousarray(np.atleast_2d(np.asarray(X0, dtype=float)))
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    U = np.ascontiguousarray(U)
    if X0.shape[0] != U.shape[0]:
        raise InvalidArgument("initial states and inputs disagree on the batch size")
    if U.shape[1] not in (1, nsteps + 1):
        raise InvalidArgument(f"input samples must number 1 or {nsteps + 1}, got {U.shape[1]}")
    if plant.poly is None:
        return _open_loop_numpy(plant, X0, U, dt, nsteps, stride, guard)
    p = plant.poly

    def run(lo, hi):
        return _kernels.open_loop(p.f_coef, p.f_pow, p.f_row, X0[lo:hi], U[lo:hi],
                                  float(dt), int(nsteps), int(stride), float(guard))

    parts = _parallel.run_chunked(run, X0.shape[0])
    return np.concatenate([a for a, _ in parts]), np.concatenate([b for _, b in parts])


def _trajectory(plant, states, inputs, dt, stride):
    times = np.arange(states.shape[0]) * dt * stride
    return Trajectory(times=times, states=states, inputs=inputs, outputs=plant.g(states))


def simulate_constant_input(plant: PlantModel, x0, u0: float, horizon: float, dt: float = 1e-3,
                            stride: int = 1) -> Trajectory:
    """RK4 trajectory of the plant under a constant input.

    Raises :class:`Diverged` if ``||x||_inf`` exceeds the blow-up guard.
    """
    x0 = _as_state(plant, x0)
    nsteps = step_count(horizon, dt)
    XS, div = open_loop_batch(plant, x0[None], np.array([float(u0)]), dt, nsteps, stride)
    if div[0] >= 0:
        raise Diverged(div[0] * dt)
    return _trajectory(plant, XS[0], np.full(XS.shape[1], float(u0)), dt, stride)


def simulate_input(plant: PlantModel, x0, u_samples, dt: float, stride: int = 1) -> Trajectory:
    """RK4 trajectory under an input sampled on the step grid ``t_i = i * dt``."""
    x0 = _as_state(plant, x0)
    u_samples = np.asarray(u_samples, dtype=float)
    nsteps = u_samples.size - 1
    if nsteps < 1:
        raise InvalidArgument("need at least two input samples")
    XS, div = open_loop_batch(plant, x0[None], u_samples[None], dt, nsteps, stride)
    if div[0] >= 0:
        raise Diverged(div[0] * dt)
    return _trajectory(plant, XS[0], u_samples[::stride], dt, stride)


def fd_step(x) -> float:
    return 1e-6 * (1.0 + float(np.max(np.abs(x))))


def jacobian_x(plant: PlantModel, x, u: float) -> np.ndarray:
    """``df/dx`` at (x, u): analytic when available, else central differences."""
    x = _as_state(plant, x)
    if plant.jac_x is not None:
        return np.asarray(plant.jac_x(x, u), dtype=float).reshape(plant.n, plant.n)
    h = fd_step(x)
    eye = np.eye(plant.n) * h
    fp = plant.f(x[None] + eye, np.full(plant.n, float(u)))
    fm = plant.f(x[None] - eye, np.full(plant.n, float(u)))
    return ((fp - fm) / (2.0 * h)).T


def jacobian_u(plant: PlantModel, x, u: float) -> np.ndarray:
    x = _as_state(plant, x)
    if plant.jac_u is not None:
        return np.asarray(plant.jac_u(x, u), dtype=float).reshape(plant.n)
    h = 1e-6 * (1.0 + abs(float(u)))
    return (plant.f(x, u + h) - plant.f(x, u - h)) / (2.0 * h)


def gradient_g(plant: PlantModel, x) -> np.ndarray:
    x = _as_state(plant, x)
    if plant.grad_g is not None:
        return np.asarray(plant.grad_g(x), dtype=float).reshape(plant.n)
    h = fd_step(x)
    eye = np.eye(plant.n) * h
    return (plant.g(x[None] + eye) - plant.g(x[None] - eye)) / (2.0 * h)


# --- registry and config files -------------------------------------------------

def _linear1d() -> PlantModel:
    return PlantModel.from_polynomial(
        "linear1d", 1,
        [[(-1.0, (1, 0)), (1.0, (0, 1))]],
        [(1.0, (1,))],
    )


def _osc_cubic() -> PlantModel:
    return PlantModel.from_polynomial(
        "osc_cubic", 2,
        [[(1.0, (0, 1, 0))],
         [(-1.0, (1, 0, 0)), (-2.0, (0, 1, 0)), (1.0, (0, 0, 1))]],
        [(1.0, (1, 0)), (1.0, (3, 0))],
    )


def _scalar_cubic() -> PlantModel:
    return PlantModel.from_polynomial(
        "scalar_cubic", 1,
        [[(-1.0, (3, 0)), (-1.0, (1, 0)), (1.0, (0, 1))]],
        [(1.0, (1,))],
    )


BUILTIN_PLANTS: dict[str, Callable[[], PlantModel]] = {
    "linear1d": _linear1d,
    "osc_cubic": _osc_cubic,
    "scalar_cubic": _scalar_cubic,
}


def get_plant(name: str) -> PlantModel:
    try:
        return BUILTIN_PLANTS[name]()
    except KeyError:
        raise InvalidArgument(
            f"unknown plant {name!r}; built-ins are {', '.join(sorted(BUILTIN_PLANTS))}"
        ) from None


def _monomial_list(items, what):
    out = []
    for item in items:
        try:
            out.append((float(item["coeff"]), [int(p) for p in item["powers"]]))
        except (KeyError, TypeError, ValueError):
            raise InvalidArgument(f"malformed {what} monomial: {item!r}") from None
    return out


def plant_from_config(cfg: Mapping) -> PlantModel:
    """Build a polynomial plant from the JSON config layout.

    ``{"name", "n", "umin", "umax", "f": [[{"coeff", "powers"}, ...], ...],
    "g": [{"coeff", "powers"}, ...]}``
    """
    try:
        n = int(cfg["n"])
        f_raw, g_raw = cfg["f"], cfg["g"]
    except KeyError as exc:
        raise InvalidArgument(f"plant config is missing key {exc.args[0]!r}") from None
    if n < 1:
        raise InvalidArgument("plant dimension n must be positive")
    f_terms = [_monomial_list(comp, "f") for comp in f_raw]
    g_terms = _monomial_list(g_raw, "g")
    bounds = (float(cfg.get("umin", -1.0)), float(cfg.get("umax", 1.0)))
    return PlantModel.from_polynomial(str(cfg.get("name", "custom")), n, f_terms, g_terms, bounds)


def plant_to_config(plant: PlantModel) -> dict:
    if plant.poly is None:
        raise InvalidArgument("only polynomial plants can be serialized")
    p = plant.poly
    return {
        "name": plant.name,
        "n": plant.n,
        "umin": plant.u_bounds[0],
        "umax": plant.u_bounds[1],
        "f": [[{"coeff": c, "powers": list(pw)} for c, pw in comp] for comp in p.f_terms],
        "g": [{"coeff": c, "powers": list(pw)} for c, pw in p.g_terms],
    }


def load_plant(source: str) -> PlantModel:
    """A built-in plant by name, or a polynomial plant from a JSON file path."""
    if source in BUILTIN_PLANTS:
        return get_plant(source)
    path = Path(source)
    if path.suffix.lower() == ".json" or path.exists():
        try:
            cfg = json.loads(path.read_text())
        except FileNotFoundError:
            raise InvalidArgument(f"plant config {source!r} not found") from None
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"plant config {source!r} is not valid JSON: {exc}") from None
        return plant_from_config(cfg)
    return get_plant(source)


def jacobian_x_batch(plant: PlantModel, X, U) -> np.ndarray:
    """Batched ``df/dx``: X is (B, n), U is (B,); returns (B, n, n)."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    if plant.jac_x is not None:
        return np.asarray(plant.jac_x(X, U), dtype=float)
    h = 1e-6 * (1.0 + np.max(np.abs(X), axis=1))
    out = np.empty(X.shape + (plant.n,))
    for j in range(plant.n):
        e = np.zeros_like(X)
        e[:, j] = h
        out[:, :, j] = (plant.f(X + e, U) - plant.f(X - e, U)) / (2.0 * h[:, None])
    return out


def jacobian_u_batch(plant: PlantModel, X, U) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    if plant.jac_u is not None:
        return np.asarray(plant.jac_u(X, U), dtype=float)
    h = 1e-6 * (1.0 + np.abs(U))
    return (plant.f(X, U + h) - plant.f(X, U - h)) / (2.0 * h[:, None])


def gradient_g_batch(plant: PlantModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if plant.grad_g is not None:
        return np.asarray(plant.grad_g(X), dtype=float)
    h = 1e-6 * (1.0 + np.max(np.abs(X), axis=1))
    out = np.empty(X.shape)
    for j in range(plant.n):
        e = np.zeros_like(X)
        e[:, j] = h
        out[:, j] = (plant.g(X + e) - plant.g(X - e)) / (2.0 * h)
    return out
