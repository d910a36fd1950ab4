"""Sampled regions of attraction: the X_T membership test, grid sampling, and empirical gains.

A pair ``(x0, u0)`` belongs to ``X_T`` when the constant-input trajectory ``z``
from ``x0`` lands within ``eps0/2`` of ``Xi(u0)`` at time ``T_roa``.  For small
enough gain every member then converges under the closed loop; the gain is
found here by halving from ``k_start`` until all sampled members converge.
``T_roa`` is chosen by the user and is unrelated to the recurrence horizon of
the gain certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .closed_loop import simulate_batch
from .equilibrium import EquilibriumMap, equilibria
from .errors import InvalidArgument, SelectionFailed
from .plant import PlantModel, open_loop_batch, step_count
from .stability import StabilityCertificate

ROA_DT = 1e-2
MAX_HALVINGS = 20
MAX_RECORDS = 4000
MAX_STEPS = 20_000_000  # per convergence test; guards the 1/k horizon growth


@dataclass(frozen=True)
class XtSample:
    x0: np.ndarray
    u0: float
    in_XT: bool
    converged: bool | None = None
    settle_time: float = float("inf")


@dataclass(frozen=True)
class GridAxis:
    name: str
    lo: float
    hi: float
    n: int

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


@dataclass(frozen=True)
class GridSpec:
    """Box grid over ``(x1, ..., xn, u)``; nodes in C order of that axis list."""

    axes: tuple[GridAxis, ...]

    @property
    def n(self) -> int:
        return len(self.axes) - 1

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.array(list(product(*(a.values() for a in self.axes))), dtype=float)
        return pts[:, :-1], pts[:, -1]

    def refined(self, factor: int = 2) -> GridSpec:
        """Same box with ``factor`` times the resolution along every axis."""
        return GridSpec(tuple(GridAxis(a.name, a.lo, a.hi, factor * (a.n - 1) + 1 if a.n > 1 else 1)
                              for a in self.axes))


def parse_grid(text: str, n: int) -> GridSpec:
    """Parse ``"x1:lo:hi:n,...,xn:lo:hi:n,u:lo:hi:n"`` for a plant of dimension ``n``."""
    axes = {}
    for part in text.split(","):
        fields = part.strip().split(":")
        if len(fields) != 4:
            raise InvalidArgument(f"grid axis {part!r} is not name:lo:hi:n")
        name = fields[0].strip()
        try:
            lo, hi, count = float(fields[1]), float(fields[2]), int(fields[3])
        except ValueError:
            raise InvalidArgument(f"grid axis {part!r} has non-numeric bounds or resolution") from None
        if count < 1:
            raise InvalidArgument(f"grid axis {name!r} needs a positive resolution, got {count}")
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
            raise InvalidArgument(f"grid axis {name!r} needs finite bounds with lo <= hi")
        if count == 1 and hi != lo:
            raise InvalidArgument(f"grid axis {name!r} with one node needs lo == hi")
        if name in axes:
            raise InvalidArgument(f"grid axis {name!r} given twice")
        axes[name] = GridAxis(name, lo, hi, count)
    wanted = [f"x{i + 1}" for i in range(n)] + ["u"]
    if sorted(axes) != sorted(wanted):
        raise InvalidArgument(f"grid axes must be exactly {','.join(wanted)}")
    return GridSpec(tuple(axes[w] for w in wanted))


def membership_batch(plant: PlantModel, X0, U0, xi0, eps0: float, T_roa: float,
                     dt: float = ROA_DT) -> np.ndarray:
    """Vectorized X_T test given the target equilibria ``xi0``; blow-up means non-member."""
    if not T_roa > 0:
        raise InvalidArgument(f"T_roa must be positive, got {T_roa}")
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    nsteps = step_count(T_roa, dt)
    XS, div = open_loop_batch(plant, X0, np.asarray(U0, dtype=float), T_roa / nsteps, nsteps,
                              nsteps)
    dist = np.max(np.abs(XS[:, -1] - xi0), axis=1)
    return (div < 0) & (dist <= 0.5 * eps0)


def _check_inputs(emap, U0):
    if not np.all(emap.spec.contains(np.asarray(U0))):
        raise InvalidArgument(f"u0 must lie in [{emap.spec.u_min}, {emap.spec.u_max}]")


def membership_XT(plant: PlantModel, emap: EquilibriumMap, cert: StabilityCertificate, x0,
                  u0: float, T_roa: float, eps0: float | None = None, dt: float = ROA_DT) -> bool:
    """``||z(T_roa) - Xi(u0)||_inf <= eps0 / 2`` with ``z`` the constant-input trajectory."""
    _check_inputs(emap, u0)
    eps0 = cert.eps0 if eps0 is None else eps0
    xi0 = equilibria(plant, emap, np.array([float(u0)]))
    return bool(membership_batch(plant, np.atleast_1d(x0)[None], np.array([float(u0)]), xi0, eps0,
                                 T_roa, dt)[0])


@dataclass(frozen=True)
class XtGrid:
    X0: np.ndarray
    U0: np.ndarray
    in_XT: np.ndarray
    T_roa: float
    eps0: float
    converged: np.ndarray | None = None
    settle_time: np.ndarray | None = None

    @property
    def fraction(self) -> float:
        return float(np.mean(self.in_XT)) if self.in_XT.size else 0.0

    def members(self) -> tuple[np.ndarray, np.ndarray]:
        return self.X0[self.in_XT], self.U0[self.in_XT]

    def samples(self) -> list[XtSample]:
        out = []
        for i in range(self.U0.size):
            conv = None if self.converged is None or not self.in_XT[i] else bool(self.converged[i])
            st = float("inf") if self.settle_time is None else float(self.settle_time[i])
            out.append(XtSample(self.X0[i], float(self.U0[i]), bool(self.in_XT[i]), conv, st))
        return out

    def with_convergence(self, converged: np.ndarray, settle_time: np.ndarray) -> XtGrid:
        return XtGrid(self.X0, self.U0, self.in_XT, self.T_roa, self.eps0, converged, settle_time)


def sample_XT(plant: PlantModel, emap: EquilibriumMap, cert: StabilityCertificate, T_roa: float,
              grid: GridSpec, eps0: float | None = None, dt: float = ROA_DT) -> XtGrid:
    if grid.n != plant.n:
        raise InvalidArgument(f"grid has {grid.n} state axes, plant has {plant.n}")
    X0, U0 = grid.nodes()
    _check_inputs(emap, U0)
    eps0 = cert.eps0 if eps0 is None else eps0
    xi0 = equilibria(plant, emap, U0)
    return XtGrid(X0, U0, membership_batch(plant, X0, U0, xi0, eps0, T_roa, dt), float(T_roa),
                  float(eps0))


@dataclass(frozen=True)
class NestingReport:
    fraction_T: float
    fraction_2T: float
    exceptions: int

    @property
    def ok(self) -> bool:
        return self.exceptions == 0 and self.fraction_2T >= self.fraction_T


def nesting_report(plant: PlantModel, emap: EquilibriumMap, cert: StabilityCertificate, T_roa: float,
                   grid: GridSpec, eps0: float | None = None, dt: float = ROA_DT,
                   first: XtGrid | None = None) -> NestingReport:
    """Compare membership at ``T_roa`` and ``2 T_roa``; exceptions are members lost when doubling."""
    a = first if first is not None else sample_XT(plant, emap, cert, T_roa, grid, eps0, dt)
    b = sample_XT(plant, emap, cert, 2.0 * T_roa, grid, eps0, dt)
    return NestingReport(a.fraction, b.fraction, int(np.sum(a.in_XT & ~b.in_XT)))


# --- empirical gain selection -----------------------------------------------------

@dataclass(frozen=True)
class ConvergenceResult:
    converged: np.ndarray
    settle_time: np.ndarray
    final_error: np.ndarray
    slope: np.ndarray
    horizon: float


def convergence_horizon(emap: EquilibriumMap, k: float, T_roa: float) -> float:
    return max(50.0 / (emap.mu * k), 10.0 * T_roa)


def _envelope_slope(t, e, floor=1e-12):
    # slope of log of the running upper envelope max_{s >= t} e(s)
    env = np.maximum.accumulate(e[::-1])[::-1]
    keep = env > floor
    if keep.sum() < 2:
        return -np.inf
    return float(np.polyfit(t[keep], np.log(env[keep]), 1)[0])


def test_convergence(plant: PlantModel, emap: EquilibriumMap, X0, U0, r: float, k: float,
                     T_roa: float, dt: float = ROA_DT) -> ConvergenceResult:
    """Closed-loop runs from each ``(x0, u0)``.

    Converged means: ``|y - r| <= 1e-3 (y_max - y_min)`` from some time on,
    final ``u`` inside the box, and a negative slope of the log envelope of
    ``|y - r| + |u - u_r|``.
    """
    u_r = emap.invert_G(r)
    tol = 1e-3 * (emap.y_max - emap.y_min)
    horizon = convergence_horizon(emap, k, T_roa)
    nsteps = step_count(horizon, dt)
    stride = max(1, nsteps // MAX_RECORDS)
    XS, US, _, div = simulate_batch(plant, emap.spec, X0, U0, k, r, dt, nsteps, stride)
    t = np.arange(XS.shape[1]) * dt * stride
    B = XS.shape[0]
    conv = np.zeros(B, dtype=bool)
    st = np.full(B, np.inf)
    fe = np.full(B, np.inf)
    slope = np.full(B, np.inf)
    for b in range(B):
        if div[b] >= 0:
            continue
        err = np.abs(plant.g(XS[b]) - r)
        bad = np.flatnonzero(~(err <= tol))
        st[b] = t[0] if bad.size == 0 else (np.inf if bad[-1] == t.size - 1 else t[bad[-1] + 1])
        fe[b] = err[-1]
        slope[b] = _envelope_slope(t, err + np.abs(US[b] - u_r))
        conv[b] = (np.isfinite(st[b]) and emap.spec.contains(US[b, -1]) and slope[b] < 0)
    return ConvergenceResult(conv, st, fe, slope, horizon)


test_convergence.__test__ = False  # not a pytest test despite the name


@dataclass(frozen=True)
class GainSelection:
    k: float
    halvings: int
    k_max_certified: float | None
    horizon: float
    result: ConvergenceResult


def select_gain_empirical(plant: PlantModel, emap: EquilibriumMap, cert: StabilityCertificate,
                          X0, U0, r: float, k_start: float, T_roa: float,
                          k_max_certified: float | None = None, dt: float = ROA_DT,
                          max_halvings: int = MAX_HALVINGS) -> GainSelection:
    """Largest ``k_start / 2**j`` (``j <= max_halvings``) under which every sample converges.

    Gains whose convergence horizon would exceed ``MAX_STEPS`` steps end the
    search with :class:`SelectionFailed`.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    U0 = np.asarray(U0, dtype=float).reshape(-1)
    if U0.size == 0:
        raise InvalidArgument("no member samples to test")
    if not k_start > 0:
        raise InvalidArgument(f"k_start must be positive, got {k_start}")
    emap.check_reference(r)
    k = float(k_start)
    failing = 0
    for j in range(max_halvings + 1):
        if convergence_horizon(emap, k, T_roa) / dt > MAX_STEPS:
            raise SelectionFailed(
                f"gain {k:.6g} needs a convergence horizon beyond {MAX_STEPS} steps",
                failing_sample={"x0": X0[failing].tolist(), "u0": float(U0[failing]), "k": k},
            )
        res = test_convergence(plant, emap, X0, U0, r, k, T_roa, dt)
        if res.converged.all():
            return GainSelection(k, j, k_max_certified, res.horizon, res)
        failing = int(np.flatnonzero(~res.converged)[0])
        if j < max_halvings:
            k *= 0.5
    raise SelectionFailed(
        f"no gain down to {k:.6g} made every sample converge",
        failing_sample={"x0": X0[failing].tolist(), "u0": float(U0[failing]), "k": k},
    )
