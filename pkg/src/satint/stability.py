"""Sampled certification of uniform exponential stability around the equilibria.

Local stability comes from the spectral abscissa of ``A(u0) = df/dx`` at each
equilibrium.  The decay envelope ``||x(t) - Xi(u0)|| <= m exp(-lam t) ||x(0) - Xi(u0)||``
is then fitted to simulated probe trajectories.  The result is a *sampled*
certificate: sound on the probe set, not a proof.  State norms are ``inf``-norms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import rng as rngmod
from .equilibrium import EquilibriumMap, equilibria, equilibrium_at
from .errors import CertificationFailed, NotExponentiallyStable
from .plant import PlantModel, jacobian_x, open_loop_batch, step_count

CERT_LABEL = "sampled certificate"


def spectral_abscissa(plant: PlantModel, emap: EquilibriumMap, u0: float) -> float:
    """Largest real part of the eigenvalues of the Jacobian at ``(Xi(u0), u0)``."""
    x = equilibrium_at(plant, emap, u0)
    return float(np.max(np.linalg.eigvals(jacobian_x(plant, x, u0)).real))


def _grid_abscissae(plant, emap):
    return np.array([
        np.max(np.linalg.eigvals(jacobian_x(plant, x, u)).real)
        for u, x in zip(emap.u_grid, emap.xi_values)
    ])


@dataclass(frozen=True)
class ProbeEvidence:
    u0: float
    abscissa: float
    worst_ratio: float


@dataclass(frozen=True)
class StabilityCertificate:
    lambda0: float
    m: float
    lam: float
    eps0: float
    evidence: tuple = field(default=(), repr=False)
    label: str = CERT_LABEL

    def envelope(self, t):
        return self.m * np.exp(-self.lam * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class CertifyOptions:
    n_dirs: int = 16
    radii: tuple = tuple(np.geomspace(0.01, 1.0, 7))
    horizon: float | None = None
    u_nodes: int = 21
    dt: float | None = None
    m_cap: float = 100.0
    max_shrinks: int = 5
    seed: int = 0


def probe_directions(n: int, n_random: int, rng: np.random.Generator) -> np.ndarray:
    """Unit ``inf``-norm directions: the cube vertices (for small n) plus random ones.

    For a linear plant the envelope ratio is convex in the direction, so the
    vertices already contain the worst case.
    """
    dirs = []
    if n <= 6:
        dirs.extend(product((-1.0, 1.0), repeat=n))
    if n_random:
        z = rng.standard_normal((n_random, n))
        dirs.extend(z / np.max(np.abs(z), axis=1, keepdims=True))
    return np.array(dirs, dtype=float).reshape(-1, n)


def simulate_probes(plant, U0, X0, xi, horizon, dt):
    nsteps = step_count(horizon, dt)
    stride = max(1, nsteps // 1000)
    XS, _ = open_loop_batch(plant, X0, U0, dt, nsteps, stride)
    dev = np.max(np.abs(XS - xi[:, None, :]), axis=2)
    dev0 = np.max(np.abs(X0 - xi), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = dev / dev0[:, None]
    ratio[~np.isfinite(ratio)] = np.inf
    times = np.arange(XS.shape[1]) * dt * stride
    return times, ratio


def certify_assumption1(plant: PlantModel, emap: EquilibriumMap,
                        options: CertifyOptions | None = None) -> StabilityCertificate:
    """Fit ``(m, lam, eps0)`` to probe trajectories around sampled equilibria.

    Starts from ``lam = 0.9 |lambda0|``; for each candidate radius the
    smallest valid ``m`` is the worst observed ratio over all probes of that
    radius or less.  ``eps0`` is the largest radius whose ``m`` stays below
    ``m_cap``; without one, ``lam`` shrinks by 0.8 up to ``max_shrinks`` times.
    """
    opt = options or CertifyOptions()
    absc = _grid_abscissae(plant, emap)
    bad = np.flatnonzero(absc >= 0)
    if bad.size:
        i = int(bad[0])
        raise NotExponentiallyStable(emap.u_grid[i], absc[i])
    lambda0 = float(np.max(absc))

    horizon = opt.horizon or 10.0 / abs(lambda0)
    dt = opt.dt or min(1e-2, horizon / 1000.0)
    idx = np.unique(np.round(np.linspace(0, emap.u_grid.size - 1, max(opt.u_nodes, 1))).astype(int))
    u_nodes = emap.u_grid[idx]
    xi_nodes = emap.xi_values[idx]
    radii = np.sort(np.asarray(opt.radii, dtype=float))
    dirs = probe_directions(plant.n, opt.n_dirs, rngmod.stream(opt.seed, "certify", 0))

    # probe layout: (u node, direction, radius)
    nu, nd, nr = u_nodes.size, dirs.shape[0], radii.size
    U0 = np.repeat(u_nodes, nd * nr)
    xi = np.repeat(xi_nodes, nd * nr, axis=0)
    offsets = (dirs[:, None, :] * radii[None, :, None]).reshape(nd * nr, plant.n)
    X0 = xi + np.tile(offsets, (nu, 1))
    times, ratio = simulate_probes(plant, U0, X0, xi, horizon, dt)
    radius_of = np.tile(np.arange(nr), nu * nd)

    lam = 0.9 * abs(lambda0)
    for _ in range(opt.max_shrinks + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            m_probe = np.max(ratio * np.exp(lam * times)[None, :], axis=1)
        m_probe = np.where(np.isnan(m_probe), np.inf, m_probe)
        per_radius = np.array([np.max(m_probe[radius_of == j]) for j in range(nr)])
        m_upto = np.maximum(1.0, np.maximum.accumulate(per_radius))
        ok = np.flatnonzero(m_upto < opt.m_cap)
        if ok.size:
            j = int(ok[-1])
            sel = radius_of <= j
            evidence = []
            for a in range(nu):
                block = slice(a * nd * nr, (a + 1) * nd * nr)
                evidence.append(ProbeEvidence(float(u_nodes[a]), float(absc[idx[a]]),
                                              float(np.max(m_probe[block][sel[block]]))))
            return StabilityCertificate(lambda0=lambda0, m=float(m_upto[j]), lam=float(lam),
                                        eps0=float(radii[j]), evidence=tuple(evidence))
        lam *= 0.8
    worst = int(np.argmax(m_probe))
    raise CertificationFailed(
        f"no decay envelope with m < {opt.m_cap} fits the probes",
        worst_probe={"u0": float(U0[worst]), "x0": X0[worst].tolist(), "ratio": float(m_probe[worst])},
    )


def validate_certificate(plant: PlantModel, emap: EquilibriumMap, cert: StabilityCertificate,
                         n_probes: int = 500, seed: int = 1, tol_factor: float = 1.02,
                         horizon: float | None = None, dt: float | None = None) -> dict:
    """Check the envelope on fresh random probes (random input, direction, radius <= eps0)."""
    rng = rngmod.stream(seed, "validate", 0)
    spec = emap.spec
    U0 = rng.uniform(spec.u_min, spec.u_max, n_probes)
    d = rng.standard_normal((n_probes, plant.n))
    d /= np.max(np.abs(d), axis=1, keepdims=True)
    rho = cert.eps0 * rng.uniform(0.0, 1.0, n_probes)
    rho = np.maximum(rho, 1e-3 * cert.eps0)
    xi = equilibria(plant, emap, U0)
    X0 = xi + d * rho[:, None]
    horizon = horizon or 10.0 / abs(cert.lambda0)
    dt = dt or min(1e-2, horizon / 1000.0)
    times, ratio = simulate_probes(plant, U0, X0, xi, horizon, dt)
    with np.errstate(over="ignore", invalid="ignore"):
        worst = np.max(ratio * np.exp(cert.lam * times)[None, :], axis=1)
    violations = int(np.sum(~(worst <= cert.m * tol_factor)))
    return {"probes": n_probes, "violations": violations, "worst_ratio": float(np.max(worst)),
            "m": cert.m}
