"""Falsification harnesses for the slow-input, tube, sample-hold and gain lemmas.

Each harness draws random instances that satisfy a lemma's hypotheses,
simulates them, and counts instances whose conclusion fails by more than the
discretization slack ``tol_dt``.  Failures inside the slack are logged as
numerical-marginal and not counted.  A clean run is consistency evidence for
the certified constants, not a proof.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as rngmod
from .closed_loop import simulate_batch, tol_dt
from .equilibrium import EquilibriumMap, equilibria
from .gains import GainCertificate
from .plant import PlantModel, open_loop_batch
from .stability import StabilityCertificate

NOTE = "zero violations are consistency evidence, never proof"
ATOL = 1e-9
MAX_RECORDS = 2000


@dataclass
class InstanceRecord:
    index: int
    eps: float
    margin: float
    status: str
    info: dict = field(default_factory=dict)


@dataclass
class LemmaReport:
    lemma_id: str
    instances: int
    violations: int
    marginal: int
    unresolved: int
    worst_margin: float
    constants: dict
    details: list
    note: str = NOTE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["details"] = [asdict(rec) for rec in self.details]
        return d


def harness_dt(gain: GainCertificate) -> float:
    """Step size keeping ``dt * L1`` small and resolving the recurrence horizon."""
    return float(min(1e-2, 0.25 / gain.L1, gain.T / 100.0))


def _classify(lhs, rhs, slack):
    """Relative margin ``1 - lhs/rhs`` (worst point) and status for ``lhs <= rhs``."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), lhs.shape)
    if lhs.size == 0:
        return 1.0, "ok"
    if not np.all(np.isfinite(lhs)):
        return -math.inf, "violation"
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(rhs > 0, 1.0 - lhs / rhs, np.where(lhs <= ATOL, 1.0, -np.inf))
    margin = float(np.min(rel))
    if np.any(lhs > rhs * (1.0 + slack) + ATOL):
        return margin, "violation"
    if np.any(lhs > rhs + ATOL):
        return margin, "marginal"
    return margin, "ok"


def _merge(*results):
    order = {"ok": 0, "marginal": 1, "unresolved": 2, "violation": 3}
    margin = min(m for m, _ in results)
    status = max((s for _, s in results), key=order.__getitem__)
    return margin, status


def _report(lemma_id, records, constants):
    return LemmaReport(
        lemma_id=lemma_id,
        instances=len(records),
        violations=sum(r.status == "violation" for r in records),
        marginal=sum(r.status == "marginal" for r in records),
        unresolved=sum(r.status == "unresolved" for r in records),
        worst_margin=min((r.margin for r in records), default=1.0),
        constants=constants,
        details=records,
    )


# --- random Lipschitz inputs ------------------------------------------------------

def lipschitz_input(rng: np.random.Generator, u_min: float, u_max: float, slope: float, dt: float,
                    nsteps: int, segment: float, u_start: float | None = None) -> np.ndarray:
    """Clipped piecewise-linear input on the step grid.

    Slopes are uniform in ``[-slope, slope]`` and redrawn every ``segment``
    time units; clipping to ``[u_min, u_max]`` preserves the Lipschitz bound.
    """
    per = max(1, int(round(segment / dt)))
    n_seg = nsteps // per + 1
    slopes = rng.uniform(-slope, slope, n_seg)
    u = np.empty(nsteps + 1)
    u[0] = rng.uniform(u_min, u_max) if u_start is None else u_start
    for i in range(nsteps):
        u[i + 1] = min(max(u[i] + slopes[i // per] * dt, u_min), u_max)
    return u


def _offset(rng, n, eps):
    """A perturbation with inf-norm <= eps; half the time exactly on the sphere."""
    d = rng.standard_normal(n)
    d /= np.max(np.abs(d))
    if rng.random() < 0.5:
        d *= rng.uniform(0.0, 1.0)
    return eps * d


def _draw_eps(rng, eps0):
    return float(eps0 * 10.0 ** rng.uniform(-2.0, 0.0))


@dataclass(frozen=True)
class OpenLoopInstance:
    eps: float
    x0: np.ndarray
    u: np.ndarray
    slope: float


def make_open_loop_instances(plant: PlantModel, emap: EquilibriumMap, gain: GainCertificate,
                             n_instances: int, seed: int, dt: float, horizon: float,
                             kappa_scale: float = 1.0) -> list[OpenLoopInstance]:
    """Random instances of the slow-input hypotheses: ``u`` is ``kappa*eps``-Lipschitz
    with values in the box and ``||x0 - Xi(u(0))|| <= eps``."""
    spec = emap.spec
    nsteps = int(round(horizon / dt))
    out = []
    for i in range(n_instances):
        rng = rngmod.stream(seed, "open-loop-instance", i)
        eps = _draw_eps(rng, gain.eps0)
        slope = kappa_scale * gain.kappa * eps
        u = lipschitz_input(rng, spec.u_min, spec.u_max, slope, dt, nsteps, gain.T / 4.0)
        x0 = equilibria(plant, emap, u[:1])[0] + _offset(rng, plant.n, eps)
        out.append(OpenLoopInstance(eps, x0, u, slope))
    return out


def _open_loop_deviation(plant, emap, instances, dt):
    """Times and ``||x(t) - Xi(u(t))||_inf`` for every instance (NaN after blow-up)."""
    nsteps = instances[0].u.size - 1
    stride = max(1, nsteps // MAX_RECORDS)
    X0 = np.array([inst.x0 for inst in instances])
    U = np.array([inst.u for inst in instances])
    XS, _ = open_loop_batch(plant, X0, U, dt, nsteps, stride)
    Urec = U[:, ::stride][:, :XS.shape[1]]
    xi = equilibria(plant, emap, Urec)
    dev = np.max(np.abs(XS - xi), axis=2)
    dev[np.isnan(dev)] = np.inf
    return np.arange(XS.shape[1]) * dt * stride, dev


def _constants(cert_or_gain: GainCertificate, **extra):
    d = cert_or_gain.to_dict()
    d.update(extra)
    return d


def check_slow_input_lemma(plant: PlantModel, emap: EquilibriumMap, cert: StabilityCertificate,
                           gain: GainCertificate, n_instances: int = 50, seed: int = 0,
                           kappa_scale: float = 1.0, dt: float | None = None,
                           horizon: float | None = None,
                           instances: list[OpenLoopInstance] | None = None) -> LemmaReport:
    """``||x(t) - Xi(u(t))|| <= (2/3) eps`` for all sampled ``t >= T``.

    ``kappa_scale`` inflates the admissible slew to test that the harness
    detects a broken hypothesis.
    """
    dt = dt or harness_dt(gain)
    horizon = horizon or 5.0 * gain.T
    if instances is None:
        instances = make_open_loop_instances(plant, emap, gain, n_instances, seed, dt, horizon,
                                             kappa_scale)
    t, dev = _open_loop_deviation(plant, emap, instances, dt)
    slack = tol_dt(dt, 0.0)
    late = t >= gain.T - 1e-12
    records = []
    for i, inst in enumerate(instances):
        margin, status = _classify(dev[i, late], 2.0 / 3.0 * inst.eps, slack)
        records.append(InstanceRecord(i, inst.eps, margin, status,
                                      {"slope": inst.slope, "max_late_dev": float(np.max(dev[i, late]))}))
    return _report("slow-input", records,
                   _constants(gain, dt=dt, horizon=horizon, tol_dt=slack, kappa_scale=kappa_scale))


def check_tube_lemma(plant: PlantModel, emap: EquilibriumMap, cert: StabilityCertificate,
                     gain: GainCertificate, n_instances: int = 50, seed: int = 0,
                     kappa_scale: float = 1.0, dt: float | None = None,
                     horizon: float | None = None,
                     instances: list[OpenLoopInstance] | None = None) -> LemmaReport:
    """``||x(t) - Xi(u(t))|| < (m + 1/6) eps`` for all sampled ``t >= 0``."""
    dt = dt or harness_dt(gain)
    horizon = horizon or 5.0 * gain.T
    if instances is None:
        instances = make_open_loop_instances(plant, emap, gain, n_instances, seed, dt, horizon,
                                             kappa_scale)
    t, dev = _open_loop_deviation(plant, emap, instances, dt)
    slack = tol_dt(dt, 0.0)
    bound_factor = gain.m + 1.0 / 6.0
    records = []
    for i, inst in enumerate(instances):
        margin, status = _classify(dev[i], bound_factor * inst.eps, slack)
        records.append(InstanceRecord(i, inst.eps, margin, status,
                                      {"slope": inst.slope, "max_dev": float(np.max(dev[i]))}))
    return _report("tube", records,
                   _constants(gain, dt=dt, horizon=horizon, tol_dt=slack, kappa_scale=kappa_scale))


# --- sample-and-hold comparison ---------------------------------------------------

@dataclass(frozen=True)
class SampleHoldInstance:
    x0: np.ndarray
    u: np.ndarray
    delta: float
    dt: float


@dataclass(frozen=True)
class SampleHoldRecord:
    sup_dev: float
    bound: float
    holds: bool
    worst_ratio: float
    per_interval: tuple


def sample_hold_dt(gain: GainCertificate, dt: float | None = None) -> float:
    """A step size that divides the recurrence horizon T exactly."""
    dt0 = dt or harness_dt(gain)
    return gain.T / math.ceil(gain.T / dt0 - 1e-9)


def check_sample_hold_comparison(plant: PlantModel, emap: EquilibriumMap, gain: GainCertificate,
                                 instance: SampleHoldInstance, slack: float | None = None) -> SampleHoldRecord:
    """Compare ``x`` (input ``u``) with the frozen-input trajectories ``z_k``.

    ``z_k`` starts from ``x((k-1)T)`` and holds ``u((k-1)T)``; on each interval
    the deviation must stay below ``(L2 delta T / L1) (exp(L1 s) - 1)`` with
    ``s`` the time since the interval start.
    """
    dt = instance.dt
    per = int(round(gain.T / dt))
    nsteps = instance.u.size - 1
    n_int = nsteps // per
    if n_int < 1:
        raise ValueError("input must cover at least one sampling period T")
    XS, _ = open_loop_batch(plant, instance.x0[None], instance.u[None], dt, n_int * per, 1)
    x = XS[0]
    starts = x[::per][:n_int]
    held = instance.u[: n_int * per + 1: per][:n_int]
    ZS, _ = open_loop_batch(plant, starts, held, dt, per, 1)
    s = np.arange(per + 1) * dt
    bound_s = gain.L2 * instance.delta * gain.T / gain.L1 * np.expm1(gain.L1 * s)
    slack = tol_dt(dt, 0.0) if slack is None else slack
    per_interval = []
    holds = True
    worst_ratio = 0.0
    for k in range(n_int):
        dev = np.max(np.abs(ZS[k] - x[k * per:(k + 1) * per + 1]), axis=1)
        ok = bool(np.all(dev <= bound_s * (1.0 + slack) + ATOL))
        holds &= ok
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound_s > 0, dev / bound_s, 0.0)
        worst_ratio = max(worst_ratio, float(np.max(ratio)))
        per_interval.append((float(np.max(dev)), bool(ok)))
    sup_dev = max(d for d, _ in per_interval)
    return SampleHoldRecord(sup_dev=sup_dev, bound=float(bound_s[-1]), holds=holds,
                            worst_ratio=worst_ratio, per_interval=tuple(per_interval))


def run_sample_hold_harness(plant: PlantModel, emap: EquilibriumMap, cert: StabilityCertificate,
                            gain: GainCertificate, n_instances: int = 50, seed: int = 0,
                            intervals: int = 4, dt: float | None = None) -> LemmaReport:
    dt = sample_hold_dt(gain, dt)
    nsteps = intervals * int(round(gain.T / dt))
    spec = emap.spec
    slack = tol_dt(dt, 0.0)
    records = []
    for i in range(n_instances):
        rng = rngmod.stream(seed, "sample-hold-instance", i)
        eps = _draw_eps(rng, gain.eps0)
        delta = gain.kappa * eps
        u = lipschitz_input(rng, spec.u_min, spec.u_max, delta, dt, nsteps, gain.T / 4.0)
        x0 = equilibria(plant, emap, u[:1])[0] + _offset(rng, plant.n, eps)
        rec = check_sample_hold_comparison(plant, emap, gain, SampleHoldInstance(x0, u, delta, dt), slack)
        if rec.holds:
            status = "ok" if rec.worst_ratio <= 1.0 + 1e-12 else "marginal"
        else:
            status = "violation"
        records.append(InstanceRecord(i, eps, 1.0 - rec.worst_ratio, status,
                                      {"delta": delta, "sup_dev": rec.sup_dev, "bound": rec.bound}))
    return _report("sample-hold", records, _constants(gain, dt=dt, tol_dt=slack))


# --- gain lemma -------------------------------------------------------------------

@dataclass(frozen=True)
class GainInstance:
    eps: float
    r: float
    x0: np.ndarray
    u0: float


def make_gain_instances(plant: PlantModel, emap: EquilibriumMap, gain: GainCertificate,
                        n_instances: int, seed: int) -> list[GainInstance]:
    """Random ``(eps, r, x0, u0)`` with ``||x0 - Xi(u0)|| <= eps`` and ``|G(u0) - r| <= lambda~ eps``."""
    spec = emap.spec
    out = []
    for i in range(n_instances):
        rng = rngmod.stream(seed, "gain-instance", i)
        eps = _draw_eps(rng, gain.eps0)
        r = float(rng.uniform(emap.y_min, emap.y_max))
        reach = gain.lambda_tilde * eps
        lo, hi = max(-reach, emap.y_min - r), min(reach, emap.y_max - r)
        u0 = float(np.clip(emap.G_inverse(r + rng.uniform(lo, hi)), spec.u_min, spec.u_max))
        x0 = equilibria(plant, emap, np.array([u0]))[0] + _offset(rng, plant.n, eps)
        out.append(GainInstance(eps, r, x0, u0))
    return out


@dataclass(frozen=True)
class GainRun:
    t: np.ndarray
    state_gap: np.ndarray
    output_gap: np.ndarray
    diverged: bool


def simulate_gain_instances(plant: PlantModel, emap: EquilibriumMap, instances: list[GainInstance],
                            k: float, horizon: float, dt: float) -> list[GainRun]:
    """Closed-loop runs recording ``||x - Xi(u)||_inf`` and ``|G(u) - r|`` (exact equilibria)."""
    nsteps = int(round(horizon / dt))
    stride = max(1, nsteps // MAX_RECORDS)
    X0 = np.array([inst.x0 for inst in instances])
    U0 = np.array([inst.u0 for inst in instances])
    R = np.array([inst.r for inst in instances])
    XS, US, _, div = simulate_batch(plant, emap.spec, X0, U0, k, R, dt, nsteps, stride)
    t = np.arange(XS.shape[1]) * dt * stride
    runs = []
    for b in range(len(instances)):
        u = np.nan_to_num(US[b], nan=emap.spec.u_min)
        xi = equilibria(plant, emap, u)
        state_gap = np.max(np.abs(XS[b] - xi), axis=1)
        output_gap = np.abs(plant.g(xi) - R[b])
        bad = np.isnan(state_gap) | np.isnan(US[b])
        state_gap[bad] = np.inf
        output_gap[bad] = np.inf
        runs.append(GainRun(t, state_gap, output_gap, bool(div[b] >= 0)))
    return runs


def _first_settled(ok: np.ndarray) -> int | None:
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return 0
    if bad[-1] == ok.size - 1:
        return None
    return int(bad[-1] + 1)


def evaluate_gain_run(run: GainRun, inst: GainInstance, gain: GainCertificate, k: float,
                      slack: float) -> tuple[float, str, dict]:
    """Check the gain lemma's conclusions on one run.

    Always checked: the tube bound and ``|G(u) - r| <= lambda~ eps`` for all
    t, and ``||x - Xi(u)|| <= (2/3) eps`` for ``t >= T``.  The contracted output
    bound ``(2/3) lambda~ eps`` is checked from ``tau = T + ln(3 delta_g alpha / (4 mu)) / (mu k)``
    on; when ``tau`` lies beyond the horizon and no settling time is observed,
    the instance is ``unresolved`` rather than a violation.
    """
    eps, lt = inst.eps, gain.lambda_tilde
    tau = gain.tau(k)
    t = run.t
    checks = [
        _classify(run.state_gap, (gain.m + 1.0 / 6.0) * eps, slack),
        _classify(run.output_gap, lt * eps, slack),
        _classify(run.state_gap[t >= gain.T - 1e-12], 2.0 / 3.0 * eps, slack),
    ]
    resolved = tau <= t[-1]
    if resolved:
        checks.append(_classify(run.output_gap[t >= tau], 2.0 / 3.0 * lt * eps, slack))
    contracted = ((run.state_gap <= 2.0 / 3.0 * eps * (1.0 + slack) + ATOL)
                  & (run.output_gap <= 2.0 / 3.0 * lt * eps * (1.0 + slack) + ATOL))
    j = _first_settled(contracted)
    tau_emp = None if j is None else float(t[j])
    margin, status = _merge(*checks)
    if run.diverged:
        status, margin = "violation", -math.inf
    elif tau_emp is None and status in ("ok", "marginal"):
        status = "violation" if resolved else "unresolved"
    info = {"r": inst.r, "tau_emp": tau_emp, "tau_bound": tau, "resolved": resolved,
            "final_state_gap": float(run.state_gap[-1]), "final_output_gap": float(run.output_gap[-1])}
    return margin, status, info


def check_gain_lemma(plant: PlantModel, emap: EquilibriumMap, cert: StabilityCertificate,
                     gain: GainCertificate, n_instances: int = 50, seed: int = 0,
                     k: float | None = None, dt: float | None = None,
                     horizon_cap: float = 2e4,
                     instances: list[GainInstance] | None = None) -> LemmaReport:
    """Closed-loop check of the gain lemma at gain ``k`` (default ``k_max / 2``).

    The horizon extends past the lemma's ``tau`` when that fits under
    ``horizon_cap``; otherwise the run lasts ``20 T`` and only the
    time-uniform and state-contraction conclusions can be decided.
    """
    k = 0.5 * gain.k_max if k is None else float(k)
    dt = dt or harness_dt(gain)
    tau = gain.tau(k)
    horizon = 1.25 * tau + 2.0 * gain.T
    if horizon > horizon_cap:
        # tau unreachable: keep enough time for the uniform and state bounds
        horizon = 20.0 * gain.T
    horizon = max(horizon, 5.0 * gain.T)
    if instances is None:
        instances = make_gain_instances(plant, emap, gain, n_instances, seed)
    runs = simulate_gain_instances(plant, emap, instances, k, horizon, dt)
    slack = tol_dt(dt, k)
    records = []
    for i, (run, inst) in enumerate(zip(runs, instances)):
        margin, status, info = evaluate_gain_run(run, inst, gain, k, slack)
        records.append(InstanceRecord(i, inst.eps, margin, status, info))
    return _report("gain", records,
                   _constants(gain, k=k, k_certified=bool(k < gain.k_max), dt=dt, horizon=horizon,
                              tau_bound=tau, tol_dt=slack))
