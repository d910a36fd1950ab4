"""Tube around the equilibrium curve, sampled Lipschitz constants, and the gain bound.

Given the stability constants ``(m, lam, eps0)`` the closed-form chain is

    T        = ln(6 m (m + 1)) / lam
    kappa    = min{ 1 / (6 (m+1) alpha T),
                    L1 / (6 (m+1) L2 T) / (exp(L1 T) - 1) }
    lambda~  = 2 delta_g (m + 1/6)
    k_max    = 2 kappa / (delta_g (6 m + 1))

``kappa`` bounds the admissible input slew per unit of state error, ``T`` is
the recurrence horizon, and any gain ``0 < k < k_max`` is certified.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import rng as rngmod
from .equilibrium import EquilibriumMap
from .errors import InvalidArgument
from .plant import PlantModel, gradient_g_batch, jacobian_u_batch, jacobian_x_batch
from .stability import StabilityCertificate

LIPSCHITZ_INFLATION = 1.1


@dataclass(frozen=True)
class TubeW:
    """Points within ``radius`` (inf-norm) of some sampled equilibrium."""

    emap: EquilibriumMap
    radius: float

    def distance(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.emap.n)
        d = np.max(np.abs(flat[:, None, :] - self.emap.xi_values[None, :, :]), axis=2).min(axis=1)
        return float(d[0]) if x.ndim == 1 else d.reshape(x.shape[:-1])

    def contains(self, x):
        d = self.distance(x)
        return d < self.radius if np.ndim(d) else bool(d < self.radius)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        xi = self.emap.xi_values
        return xi.min(axis=0) - self.radius, xi.max(axis=0) + self.radius


def build_tube_W(emap: EquilibriumMap, cert: StabilityCertificate) -> TubeW:
    return TubeW(emap, (cert.m + 1.0 / 6.0) * cert.eps0)


@dataclass(frozen=True)
class LipschitzEstimates:
    L1: float
    L2: float
    delta_g: float


def _sample_tube(W: TubeW, draws: np.ndarray) -> np.ndarray:
    # draws in [0, 1): column 0 picks a node, the rest an offset strictly inside the cube
    nodes = W.emap.xi_values
    idx = np.minimum((draws[:, 0] * nodes.shape[0]).astype(int), nodes.shape[0] - 1)
    return nodes[idx] + (2.0 * draws[:, 1:] - 1.0) * W.radius * (1.0 - 1e-9)


def estimate_lipschitz(plant: PlantModel, W: TubeW, n_samples: int = 2000, seed: int = 0,
                       inflation: float = LIPSCHITZ_INFLATION) -> LipschitzEstimates:
    """Sampled upper estimates of L1 (f in x), L2 (f in u) and delta_g (g in x) over W.

    Maxima of Jacobian norms at random points and of difference quotients on
    random pairs, inflated by ``inflation``.  Norms: induced inf-norm for
    ``df/dx``, inf-norm for ``df/du`` and the dual 1-norm for ``grad g``.
    Each random quantity has its own stream, so a larger ``n_samples``
    extends the sample set and can only raise the estimates.
    """
    if n_samples < 1:
        raise InvalidArgument("n_samples must be positive")
    n = plant.n
    spec = W.emap.spec
    X = _sample_tube(W, rngmod.stream(seed, "lipschitz-points", 0).random((n_samples, n + 1)))
    X2 = _sample_tube(W, rngmod.stream(seed, "lipschitz-pairs", 0).random((n_samples, n + 1)))
    U = spec.u_min + spec.width * rngmod.stream(seed, "lipschitz-inputs", 0).random(n_samples)
    U2 = spec.u_min + spec.width * rngmod.stream(seed, "lipschitz-inputs-2", 0).random(n_samples)

    L1 = float(np.max(np.sum(np.abs(jacobian_x_batch(plant, X, U)), axis=2)))
    L2 = float(np.max(np.abs(jacobian_u_batch(plant, X, U))))
    dg = float(np.max(np.sum(np.abs(gradient_g_batch(plant, X)), axis=1)))

    dx = np.max(np.abs(X - X2), axis=1)
    du = np.abs(U - U2)
    ok = dx > 0
    if ok.any():
        q = np.max(np.abs(plant.f(X, U) - plant.f(X2, U)), axis=1)[ok] / dx[ok]
        L1 = max(L1, float(np.max(q)))
        q = np.abs(plant.g(X) - plant.g(X2))[ok] / dx[ok]
        dg = max(dg, float(np.max(q)))
    ok = du > 0
    if ok.any():
        q = np.max(np.abs(plant.f(X, U) - plant.f(X, U2)), axis=1)[ok] / du[ok]
        L2 = max(L2, float(np.max(q)))
    return LipschitzEstimates(L1 * inflation, L2 * inflation, dg * inflation)


@dataclass(frozen=True)
class GainCertificate:
    m: float
    lam: float
    eps0: float
    L1: float
    L2: float
    delta_g: float
    alpha: float
    mu: float
    W_radius: float
    T: float
    kappa: float
    kappa_branches: tuple[float, float]
    lambda_tilde: float
    k_max: float

    def tau(self, k: float) -> float:
        """Time after which the gain lemma asserts both contracted bounds, for gain ``k``."""
        if not k > 0:
            raise InvalidArgument("gain must be positive")
        ratio = 3.0 * self.delta_g * self.alpha / (4.0 * self.mu)
        return self.T + max(0.0, math.log(ratio)) / (self.mu * k)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d.pop("kappa_branches")
        return d


def compute_constants(cert: StabilityCertificate, L1: float, L2: float, delta_g: float,
                      alpha: float, mu: float) -> GainCertificate:
    m, lam = float(cert.m), float(cert.lam)
    for name, val in (("L1", L1), ("L2", L2), ("delta_g", delta_g), ("alpha", alpha),
                      ("mu", mu), ("lambda", lam)):
        if not val > 0:
            raise InvalidArgument(f"{name} must be positive, got {val}")
    if m < 1:
        raise InvalidArgument(f"m must be at least 1, got {m}")
    T = math.log(6.0 * m * (m + 1.0)) / lam
    c = 6.0 * (m + 1.0) * T
    k1 = 1.0 / (c * alpha)
    k2 = L1 / (c * L2) / math.expm1(L1 * T)
    kappa = min(k1, k2)
    lambda_tilde = 2.0 * delta_g * (m + 1.0 / 6.0)
    k_max = 2.0 * kappa / (delta_g * (6.0 * m + 1.0))
    return GainCertificate(m=m, lam=lam, eps0=float(cert.eps0), L1=float(L1), L2=float(L2),
                           delta_g=float(delta_g), alpha=float(alpha), mu=float(mu),
                           W_radius=(m + 1.0 / 6.0) * float(cert.eps0), T=T, kappa=kappa,
                           kappa_branches=(k1, k2), lambda_tilde=lambda_tilde, k_max=k_max)
