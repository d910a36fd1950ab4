"""End-to-end certification: equilibrium map, stability constants, tube, Lipschitz bounds, gain."""

from __future__ import annotations

from dataclasses import dataclass

from .equilibrium import EquilibriumMap, build_map
from .gains import GainCertificate, LipschitzEstimates, TubeW, build_tube_W, compute_constants, estimate_lipschitz
from .plant import PlantModel
from .saturator import SaturatorSpec
from .stability import CertifyOptions, StabilityCertificate, certify_assumption1


@dataclass(frozen=True)
class CertifiedPlant:
    plant: PlantModel
    emap: EquilibriumMap
    cert: StabilityCertificate
    W: TubeW
    lipschitz: LipschitzEstimates
    gain: GainCertificate


def certify_plant(plant: PlantModel, spec: SaturatorSpec | None = None, grid_size: int = 201,
                  options: CertifyOptions | None = None, n_lipschitz: int = 2000,
                  seed: int = 0) -> CertifiedPlant:
    spec = spec or SaturatorSpec(*plant.u_bounds)
    options = options or CertifyOptions(seed=seed)
    emap = build_map(plant, spec, grid_size)
    cert = certify_assumption1(plant, emap, options)
    W = build_tube_W(emap, cert)
    lip = estimate_lipschitz(plant, W, n_lipschitz, seed)
    gain = compute_constants(cert, lip.L1, lip.L2, lip.delta_g, emap.alpha, emap.mu)
    return CertifiedPlant(plant, emap, cert, W, lip, gain)
