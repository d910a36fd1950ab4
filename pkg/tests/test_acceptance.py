"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the terminal summary.
"""

import functools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from satint import rng as rngmod
from satint.cli import main
from satint.closed_loop import (
    ClosedLoopConfig,
    Fault,
    check_lyapunov,
    compare_windup,
    log_error_slope,
    simulate_batch,
    simulate_closed_loop,
)
from satint.gains import compute_constants
from satint.lemmas import check_gain_lemma, check_slow_input_lemma, check_tube_lemma
from satint.roa import convergence_horizon, nesting_report, parse_grid, sample_XT, select_gain_empirical
from satint.saturator import SaturatorSpec, eval_S, l1_deviation_bound_batch
from satint.stability import StabilityCertificate

from conftest import PLANT_NAMES, certified
from oracles import PiecewiseAffineLoop, linear1d_interior, recovery_time

SPEC = SaturatorSpec(-1.0, 1.0)
RESULTS = []


def verdict(n, ok, detail, elapsed=None):
    timing = "" if elapsed is None else f" [{elapsed:.2f}s]"
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}{timing}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def branch_S(u, w):
    if u <= -1.0:
        return max(w, 0.0)
    if u >= 1.0:
        return min(w, 0.0)
    return w


def test_criterion_1_saturator_truth_table_and_invariance():
    t0 = time.perf_counter()
    rng = rngmod.stream(0, "acceptance-1", 0)
    N = 1_000_000
    u = rng.uniform(-2, 2, N)
    pick = rng.integers(0, 4, N)
    u[pick == 0] = -1.0
    u[pick == 1] = 1.0
    w = rng.normal(0, 5, N)
    w[rng.random(N) < 0.01] = 0.0
    got = eval_S(SPEC, u, w)
    ref = np.fromiter((branch_S(a, b) for a, b in zip(u.tolist(), w.tolist())), float, N)
    mismatches = int(np.sum(got != ref))

    runs, steps = 10_000, 1000
    outside = 0
    for b, name in enumerate(PLANT_NAMES):
        cp = certified(name)
        idx = np.arange(runs)[b::len(PLANT_NAMES)]
        r2 = rngmod.stream(0, "acceptance-1-" + name, 0)
        B = idx.size
        X0 = r2.uniform(-2, 2, (B, cp.plant.n))
        U0 = r2.uniform(-1, 1, B)
        K = 10.0 ** r2.uniform(-3, 1, B)
        R = r2.uniform(cp.emap.y_min, cp.emap.y_max, B)
        _, US, _, div = simulate_batch(cp.plant, SPEC, X0, U0, K, R, 1e-2, steps, 1)
        live = ~np.isnan(US)
        outside += int(np.sum((US[live] < -1.0) | (US[live] > 1.0)))
    elapsed = time.perf_counter() - t0
    verdict(1, mismatches == 0 and outside == 0 and elapsed < 60,
            f"{N} S evaluations, {mismatches} mismatches; {runs} closed-loop runs, "
            f"{outside} samples outside [u_min, u_max]", elapsed)


def test_criterion_2_l1_deviation_bound():
    t0 = time.perf_counter()
    rng = rngmod.stream(0, "acceptance-2", 0)
    P, dt = 1000, 1e-3
    t = np.arange(5001) * dt
    amp = rng.uniform(0.1, 10, (P, 1))
    freq = rng.uniform(0.1, 5, (P, 1))
    phase = rng.uniform(0, 2 * np.pi, (P, 1))
    base = amp * np.sin(freq * t + phase)
    noise = rng.normal(0, 1, (P, 51)).repeat(100, axis=1)[:, :5001]
    kind = rng.integers(0, 3, (P, 1))
    w1 = np.where(kind == 0, base, base + noise)
    w2 = np.where(kind == 2, w1 + rng.normal(0, 0.05, (P, 1)), base * rng.uniform(0.5, 1.5, (P, 1)) - noise)
    u1 = rng.uniform(-1, 1, P)
    u2 = rng.uniform(-1, 1, P)
    lhs, rhs, slack = l1_deviation_bound_batch(SPEC, u1, u2, w1, w2, dt)
    failures = int(np.sum(lhs > rhs + slack))
    elapsed = time.perf_counter() - t0
    verdict(2, failures == 0 and elapsed < 60,
            f"{P} signal pairs on [0, 5], {failures} failures, tightest ratio "
            f"{np.max(lhs / (rhs + slack)):.4f}", elapsed)


@functools.lru_cache(maxsize=None)
def tracking_runs():
    lin, osc = certified("linear1d"), certified("osc_cubic")
    t0 = time.perf_counter()
    cfg = ClosedLoopConfig(lin.plant, SPEC, 0.1, 0.5, np.array([0.0]), 0.0, 1e-3, 200.0, 1)
    run_lin = simulate_closed_loop(cfg, lin.emap)
    sel = select_gain_empirical(osc.plant, osc.emap, osc.cert, np.zeros((1, 2)), np.zeros(1), 1.0, 1.0, 10.0)
    horizon = convergence_horizon(osc.emap, sel.k, 10.0)
    cfg = ClosedLoopConfig(osc.plant, SPEC, sel.k, 1.0, np.zeros(2), 0.0, 1e-3, horizon, 1)
    run_osc = simulate_closed_loop(cfg, osc.emap)
    return run_lin, run_osc, sel.k, time.perf_counter() - t0


def test_criterion_3_tracking_at_desk_scale():
    run_lin, run_osc, k_osc, elapsed = tracking_runs()
    z = linear1d_interior(0.1, 0.5, 0.0, 0.0, run_lin.t)
    oracle_err = max(np.max(np.abs(run_lin.x[:, 0] - z[:, 0])), np.max(np.abs(run_lin.u - z[:, 1])))
    y_err = abs(run_lin.y[-1] - 0.5)
    u_err = abs(run_lin.u[-1] - run_lin.u_r)
    osc_err = abs(run_osc.y[-1] - 1.0)
    slope = log_error_slope(run_osc)
    ok = y_err < 1e-3 and u_err < 1e-3 and oracle_err < 1e-5 and osc_err < 1e-3 and slope < 0 and elapsed < 10
    verdict(3, ok, f"linear1d |y-r|={y_err:.2e} |u-u_r|={u_err:.2e} oracle gap={oracle_err:.2e}; "
                   f"osc_cubic k={k_osc:g} |y-r|={osc_err:.2e} log slope={slope:.4f}", elapsed)


def test_criterion_4_forced_constants():
    t0 = time.perf_counter()
    g = compute_constants(StabilityCertificate(-1.0, 1.0, 1.0, 1.0), 1.0, 1.0, 1.0, 1.0, 1.0)
    T = math.log(12.0)
    kappa = min(1 / (12 * T), 1 / (12 * T) / (math.exp(T) - 1))
    k_max = 2 * kappa / 7
    elapsed = time.perf_counter() - t0
    ok = (abs(g.T - T) <= 1e-12 * T
          and math.isclose(g.kappa, kappa, rel_tol=1e-12) and math.isclose(g.kappa, 3.049e-3, rel_tol=1e-3)
          and math.isclose(g.lambda_tilde, 7 / 3, rel_tol=1e-12)
          and math.isclose(g.k_max, k_max, rel_tol=1e-12) and math.isclose(g.k_max, 8.712e-4, rel_tol=1e-3)
          and elapsed < 1)
    verdict(4, ok, f"T={g.T:.12g} kappa={g.kappa:.6g} lambda~={g.lambda_tilde:.12g} "
                   f"k_max={g.k_max:.6g}", elapsed)


def test_criterion_5_lemma_harnesses():
    t0 = time.perf_counter()
    parts, total = [], 0
    for name in PLANT_NAMES:
        cp = certified(name)
        for label, check in (("slow-input", check_slow_input_lemma), ("tube", check_tube_lemma),
                             ("gain", check_gain_lemma)):
            rep = check(cp.plant, cp.emap, cp.cert, cp.gain, n_instances=50, seed=0)
            assert rep.instances >= 50
            total += rep.violations
            extra = f"/{rep.unresolved}u" if rep.unresolved else ""
            parts.append(f"{name}:{label}={rep.violations}{extra}")
    lin = certified("linear1d")
    broken = check_slow_input_lemma(lin.plant, lin.emap, lin.cert, lin.gain, n_instances=50, seed=0,
                                    kappa_scale=1000.0).violations
    elapsed = time.perf_counter() - t0
    verdict(5, total == 0 and broken >= 1 and elapsed < 300,
            f"violations {' '.join(parts)}; kappa x1000 on linear1d -> {broken} violations", elapsed)


def test_criterion_6_lyapunov_inequalities():
    run_lin, run_osc, _, _ = tracking_runs()
    reps = [check_lyapunov(run_lin, certified("linear1d").emap),
            check_lyapunov(run_osc, certified("osc_cubic").emap)]
    # a fast gain can keep |G(u) - r| below 2 eta* throughout; the decrease
    # check is then vacuous and only the envelope bound applies
    bad = sum(r.decrease_violations + r.decay_violations + r.envelope_violations for r in reps)
    verdict(6, bad == 0,
            "; ".join(f"eta*={r.eta_star:.3g} excess points={r.checked_points} decrease={r.decrease_violations} "
                      f"decay={r.decay_violations} envelope={r.envelope_violations}" for r in reps))


def test_criterion_7_xt_geometry():
    t0 = time.perf_counter()
    lin = certified("linear1d")
    grid = parse_grid("x1:-6:6:121,u:-1:1:21", 1)
    s = sample_XT(lin.plant, lin.emap, lin.cert, 3.0, grid, eps0=0.5)
    band = 0.5 / 2 * math.exp(3.0)
    gap = np.abs(s.X0[:, 0] - s.U0)
    wrong = s.in_XT != (gap <= band)
    cell = 12.0 / 120
    far_wrong = int(np.sum(wrong & (np.abs(gap - band) > cell)))
    nest = nesting_report(lin.plant, lin.emap, lin.cert, 3.0, grid, eps0=0.5, first=s)
    elapsed = time.perf_counter() - t0
    verdict(7, far_wrong == 0 and nest.exceptions == 0 and elapsed < 30,
            f"band |x0-u0| <= {band:.4f}: {int(wrong.sum())} misclassified ({far_wrong} beyond one cell); "
            f"nesting exceptions {nest.exceptions}", elapsed)


def test_criterion_8_anti_windup():
    t0 = time.perf_counter()
    lin = certified("linear1d")
    cfg = ClosedLoopConfig(lin.plant, SPEC, 0.2, 0.5, np.array([0.5]), 0.5, 1e-3, 400.0, 1)
    loop = PiecewiseAffineLoop(0.2, 0.5)
    sat, clp, gaps = {}, {}, []
    for D in (10.0, 20.0, 40.0):
        cmp = compare_windup(cfg, lin.emap, Fault(10.0, 10.0 + D, 5.0))
        sat[D], clp[D] = cmp.recovery_saturating, cmp.recovery_clamped
        for mode, got in (("saturating", sat[D]), ("clamped", clp[D])):
            t, x, _, _ = loop.solve(0.5, 0.5, 10.0, 10.0 + D, 5.0, 400.0, mode=mode)
            ref = recovery_time(t, x, 0.5, 10.0 + D, cmp.tol)
            gaps.append(abs(got - ref) / ref)
    growth = clp[40.0] / clp[10.0]
    drift = max(abs(sat[D] - sat[10.0]) / sat[10.0] for D in sat)
    elapsed = time.perf_counter() - t0
    verdict(8, growth > 1.5 and drift < 0.1 and max(gaps) < 0.05 and elapsed < 10,
            f"clamped recovery {clp[10.0]:.2f}->{clp[40.0]:.2f} (x{growth:.2f}); saturating "
            f"{sat[10.0]:.2f}->{sat[40.0]:.2f} (drift {drift:.1%}); max oracle gap {max(gaps):.2%}", elapsed)


CLI_RUNS = {
    "certify": ["certify", "--plant", "osc_cubic", "--out", "c.json", "--map-out", "m.csv",
                "--evidence-out", "e.csv", "--validate-probes", "50"],
    "simulate": ["simulate", "--plant", "osc_cubic", "--k", "0.3", "--r", "1.0", "--horizon", "20",
                 "--out", "s.csv"],
    "roa": ["roa", "--T", "3", "--grid", "x1:-6:6:13,u:-1:1:3", "--r", "0.5", "--eps0", "0.5",
            "--out", "r.csv", "--summary-out", "r.json"],
    "lemma-check": ["lemma-check", "--plant", "scalar_cubic", "--lemma", "slow-input", "--instances", "10",
                    "--out", "l.json"],
    "compare-windup": ["compare-windup", "--k", "0.2", "--r", "0.5", "--u0", "0.5", "--duration", "10",
                       "--offset", "5", "--horizon", "100", "--out", "w.json", "--trajectories-out", "w.csv"],
}


def test_criterion_9_cli_determinism(tmp_path, monkeypatch):
    t0 = time.perf_counter()
    differing = []
    for cmd, argv in CLI_RUNS.items():
        outputs = []
        for rep in range(2):
            d = tmp_path / f"{cmd}-{rep}"
            d.mkdir()
            monkeypatch.chdir(d)
            assert main(argv + ["--seed", "42"]) == 0, cmd
            outputs.append({p.name: p.read_bytes() for p in sorted(Path(d).iterdir())})
        if not outputs[0] or outputs[0] != outputs[1]:
            differing.append(cmd)
    elapsed = time.perf_counter() - t0
    verdict(9, not differing, f"{len(CLI_RUNS)} commands run twice with seed 42; "
                              f"differing artifacts: {differing or 'none'}", elapsed)


@pytest.fixture(scope="module", autouse=True)
def _summary():
    yield
    print("\nacceptance summary:\n" + "\n".join(RESULTS))
