"""Command-line front end.

    satint certify        --plant P [--out constants.json] [--map-out map.csv] [--evidence-out ev.csv]
    satint simulate       --plant P --k K --r R [--x0 a,b] [--u0 U] [--out traj.csv]
    satint roa            --plant P --T 3 --grid "x1:-6:6:61,u:-1:1:11" --r R [--out roa.csv]
    satint lemma-check    --plant P --lemma {slow-input,tube,sample-hold,gain} [--out report.json]
    satint compare-windup --plant P --k K --r R --duration D --offset O [--out windup.json]

Exit status: 0 on success, 1 on domain errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field

import numpy as np

from . import _parallel, io
from .closed_loop import ClosedLoopConfig, Fault, compare_windup, simulate_closed_loop, tracking_metrics
from .equilibrium import EquilibriumMap, build_map, equilibria
from .errors import InvalidArgument, SatIntError, UsageError
from .lemmas import check_gain_lemma, check_slow_input_lemma, check_tube_lemma, run_sample_hold_harness
from .pipeline import certify_plant
from .plant import PlantModel, load_plant
from .roa import GridSpec, nesting_report, parse_grid, sample_XT, select_gain_empirical
from .saturator import SaturatorSpec
from .stability import CertifyOptions, validate_certificate

COMMANDS = ("certify", "simulate", "roa", "lemma-check", "compare-windup")
LEMMAS = {
    "slow-input": check_slow_input_lemma,
    "tube": check_tube_lemma,
    "sample-hold": run_sample_hold_harness,
    "gain": check_gain_lemma,
}

log = logging.getLogger("satint")


@dataclass
class RunConfig:
    command: str
    plant_source: str
    seed: int
    threads: int | None
    params: dict
    plant: PlantModel = field(repr=False)
    spec: SaturatorSpec = field(repr=False)
    emap: EquilibriumMap = field(repr=False)
    grid: GridSpec | None = None


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--plant", default="linear1d", help="built-in name or JSON config path")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    common.add_argument("--grid-size", type=int, default=201, help="equilibrium map nodes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="satint", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", parents=[common], help="stability and gain certificates")
    c.add_argument("--out", default="constants.json")
    c.add_argument("--map-out")
    c.add_argument("--evidence-out")
    c.add_argument("--lipschitz-samples", type=int, default=2000)
    c.add_argument("--validate-probes", type=int, default=200)

    def loop_args(sp):
        sp.add_argument("--k", type=float, required=True)
        sp.add_argument("--r", type=float, required=True)
        sp.add_argument("--x0", help="comma-separated initial state (default: equilibrium at u0)")
        sp.add_argument("--u0", type=float, help="initial integrator state (default: box midpoint)")
        sp.add_argument("--dt", type=float, default=1e-3)

    s = sub.add_parser("simulate", parents=[common], help="one closed-loop run to CSV")
    loop_args(s)
    s.add_argument("--horizon", type=float, default=100.0)
    s.add_argument("--stride", type=int, default=10)
    s.add_argument("--mode", choices=("saturating", "clamped"), default="saturating")
    s.add_argument("--out", default="trajectory.csv")

    r = sub.add_parser("roa", parents=[common], help="sample X_T and pick an empirical gain")
    r.add_argument("--T", dest="T_roa", type=float, required=True)
    r.add_argument("--grid", required=True, help='"x1:lo:hi:n,...,u:lo:hi:n"')
    r.add_argument("--r", type=float, required=True)
    r.add_argument("--k-start", type=float, default=1.0)
    r.add_argument("--eps0", type=float, help="override the certified eps0")
    r.add_argument("--dt", type=float, default=1e-2)
    r.add_argument("--out", default="roa.csv")
    r.add_argument("--summary-out")

    m = sub.add_parser("lemma-check", parents=[common], help="falsification harness")
    m.add_argument("--lemma", choices=sorted(LEMMAS), required=True)
    m.add_argument("--instances", type=int, default=50)
    m.add_argument("--kappa-scale", type=float, default=1.0)
    m.add_argument("--k", type=float, help="gain for the gain lemma (default k_max/2)")
    m.add_argument("--out", default="lemma.json")

    w = sub.add_parser("compare-windup", parents=[common], help="saturating vs clamped integrator")
    loop_args(w)
    w.add_argument("--t-on", type=float, default=10.0)
    w.add_argument("--duration", type=float, required=True)
    w.add_argument("--offset", type=float, required=True)
    w.add_argument("--horizon", type=float, default=400.0)
    w.add_argument("--tol", type=float)
    w.add_argument("--out", default="windup.json")
    w.add_argument("--trajectories-out")
    return p


def _positive(value, flag):
    if value is not None and not value > 0:
        raise UsageError(flag, f"must be positive, got {value}")


def parse_config(argv) -> RunConfig:
    """Parse and validate; raises :class:`UsageError` naming the offending flag."""
    ns = build_parser().parse_args(argv)
    params = vars(ns).copy()
    for key in ("command", "plant", "seed", "threads"):
        params.pop(key)
    if ns.threads is not None and ns.threads < 1:
        raise UsageError("--threads", "must be at least 1")
    for key in ("k", "dt", "horizon", "T_roa", "k_start", "eps0", "duration"):
        _positive(params.get(key), "--" + key.replace("_", "-").replace("T-roa", "T"))
    if params.get("stride") is not None and params["stride"] < 1:
        raise UsageError("--stride", "must be at least 1")
    if params["grid_size"] < 2:
        raise UsageError("--grid-size", "needs at least 2 nodes")
    if params.get("instances") is not None and params["instances"] < 1:
        raise UsageError("--instances", "must be at least 1")
    try:
        plant = load_plant(ns.plant)
    except InvalidArgument as exc:
        raise UsageError("--plant", str(exc)) from None
    spec = SaturatorSpec(*plant.u_bounds)
    grid = None
    if ns.command == "roa":
        try:
            grid = parse_grid(ns.grid, plant.n)
        except InvalidArgument as exc:
            raise UsageError("--grid", str(exc)) from None
    if params.get("x0") is not None:
        try:
            x0 = np.array(_floats(params["x0"]))
        except ValueError:
            raise UsageError("--x0", "expects comma-separated numbers") from None
        if x0.shape != (plant.n,):
            raise UsageError("--x0", f"needs {plant.n} components")
        params["x0"] = x0
    if params.get("u0") is not None and not spec.contains(params["u0"]):
        raise UsageError("--u0", f"must lie in [{spec.u_min}, {spec.u_max}]")
    emap = build_map(plant, spec, ns.grid_size)
    if "r" in params and not emap.y_min < params["r"] < emap.y_max:
        raise UsageError("--r", f"reference {params['r']} outside ({emap.y_min:.12g}, {emap.y_max:.12g})")
    return RunConfig(ns.command, ns.plant, ns.seed, ns.threads, params, plant, spec, emap, grid)


def _certified(cfg: RunConfig, n_lipschitz: int = 2000):
    return certify_plant(cfg.plant, cfg.spec, cfg.params["grid_size"],
                         CertifyOptions(seed=cfg.seed), n_lipschitz, cfg.seed)


def _initial(cfg: RunConfig):
    p = cfg.params
    u0 = 0.5 * (cfg.spec.u_min + cfg.spec.u_max) if p.get("u0") is None else p["u0"]
    x0 = equilibria(cfg.plant, cfg.emap, np.array([u0]))[0] if p.get("x0") is None else p["x0"]
    return x0, u0


def run_certify(cfg: RunConfig) -> dict:
    cp = _certified(cfg, cfg.params["lipschitz_samples"])
    out = {
        "plant": cp.plant.name,
        "label": cp.cert.label,
        "lambda0": cp.cert.lambda0,
        "y_range": [cp.emap.y_min, cp.emap.y_max],
        "branch_jumps": [list(j) for j in cp.emap.jumps],
        "constants": cp.gain.to_dict(),
    }
    if cfg.params["validate_probes"] > 0:
        out["validation"] = validate_certificate(cp.plant, cp.emap, cp.cert,
                                                 cfg.params["validate_probes"], cfg.seed + 1)
    io.write_json(cfg.params["out"], out)
    if cfg.params.get("map_out"):
        io.write_map(cfg.params["map_out"], cp.emap)
    if cfg.params.get("evidence_out"):
        io.write_evidence(cfg.params["evidence_out"], cp.cert)
    return out


def run_simulate(cfg: RunConfig) -> dict:
    p = cfg.params
    x0, u0 = _initial(cfg)
    lc = ClosedLoopConfig(cfg.plant, cfg.spec, p["k"], p["r"], x0, u0, p["dt"], p["horizon"], p["stride"])
    run = simulate_closed_loop(lc, cfg.emap, p["mode"])
    io.write_trajectory(p["out"], run)
    return tracking_metrics(run, 1e-3 * (cfg.emap.y_max - cfg.emap.y_min)).__dict__


def run_roa(cfg: RunConfig) -> dict:
    p = cfg.params
    cp = _certified(cfg)
    grid = sample_XT(cp.plant, cp.emap, cp.cert, p["T_roa"], cfg.grid, p["eps0"], p["dt"])
    nest = nesting_report(cp.plant, cp.emap, cp.cert, p["T_roa"], cfg.grid, p["eps0"], p["dt"], grid)
    X, U = grid.members()
    summary = {"T_roa": p["T_roa"], "eps0": grid.eps0, "nodes": int(grid.U0.size),
               "members": int(U.size), "fraction_T": nest.fraction_T,
               "fraction_2T": nest.fraction_2T, "nesting_exceptions": nest.exceptions,
               "k_max_certified": cp.gain.k_max}
    sel = select_gain_empirical(cp.plant, cp.emap, cp.cert, X, U, p["r"], p["k_start"], p["T_roa"],
                                cp.gain.k_max, p["dt"])
    conv = np.zeros(grid.U0.size, dtype=bool)
    st = np.full(grid.U0.size, np.inf)
    conv[grid.in_XT] = sel.result.converged
    st[grid.in_XT] = sel.result.settle_time
    grid = grid.with_convergence(conv, st)
    summary.update({"k_T_empirical": sel.k, "halvings": sel.halvings, "horizon": sel.horizon})
    io.write_roa(p["out"], grid)
    if p.get("summary_out"):
        io.write_json(p["summary_out"], summary)
    return summary


def run_lemma_check(cfg: RunConfig) -> dict:
    p = cfg.params
    cp = _certified(cfg)
    fn = LEMMAS[p["lemma"]]
    kwargs = {"n_instances": p["instances"], "seed": cfg.seed}
    if p["lemma"] in ("slow-input", "tube"):
        kwargs["kappa_scale"] = p["kappa_scale"]
    if p["lemma"] == "gain" and p.get("k") is not None:
        kwargs["k"] = p["k"]
    report = fn(cp.plant, cp.emap, cp.cert, cp.gain, **kwargs)
    io.write_lemma_report(p["out"], report)
    return {"lemma": report.lemma_id, "instances": report.instances, "violations": report.violations,
            "marginal": report.marginal, "unresolved": report.unresolved, "note": report.note}


def run_compare_windup(cfg: RunConfig) -> dict:
    p = cfg.params
    x0, u0 = _initial(cfg)
    fault = Fault(p["t_on"], p["t_on"] + p["duration"], p["offset"])
    lc = ClosedLoopConfig(cfg.plant, cfg.spec, p["k"], p["r"], x0, u0, p["dt"], p["horizon"], 1)
    cmp = compare_windup(lc, cfg.emap, fault, p.get("tol"))
    out = {"duration": fault.duration, "offset": fault.y_offset, "tol": cmp.tol,
           "recovery_saturating": cmp.recovery_saturating, "recovery_clamped": cmp.recovery_clamped,
           "windup": cmp.windup}
    io.write_json(p["out"], out)
    if p.get("trajectories_out"):
        s, c = cmp.saturating, cmp.clamped
        io.write_csv(p["trajectories_out"], ["t", "y_saturating", "u_saturating", "y_clamped",
                                             "u_clamped", "v_clamped"],
                     np.column_stack([s.t, s.y, s.u, c.y, c.u, c.v])[::10].tolist())
    return out


RUNNERS = {
    "certify": run_certify,
    "simulate": run_simulate,
    "roa": run_roa,
    "lemma-check": run_lemma_check,
    "compare-windup": run_compare_windup,
}


def run_pipeline(cfg: RunConfig) -> dict:
    _parallel.set_max_threads(cfg.threads)
    return RUNNERS[cfg.command](cfg)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0) and 2
    except UsageError as exc:
        print(f"satint: usage error: {exc}", file=sys.stderr)
        return 2
    except SatIntError as exc:
        print(f"satint: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    try:
        summary = run_pipeline(cfg)
    except SatIntError as exc:
        print(f"satint {cfg.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for key, val in summary.items():
        shown = io.fmt(val) if isinstance(val, float) else json.dumps(io.jsonable(val))
        print(f"{key}: {shown}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
