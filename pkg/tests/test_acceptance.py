"""Acceptance gate: each criterion runs at its stated tolerance.

Every test prints one PASS/FAIL line so the suite doubles as a checklist:

    pytest tests/test_acceptance.py -v -s
"""

import json
import math
import time

import numpy as np
import pytest

from helpers import fd_gradient, fd_jacobian, random_psd, rel_err
from snpe.averaging import AveragerState, WeightScheme, explicit_weights, update
from snpe.bench import (ExperimentConfig, compute_reference, iterations_to_gap,
                        parse_trace, run_experiment, verify_trace)
from snpe.diagnostics import (TheoryConstants, averaged_noise_envelope,
                              check_hpe_condition, check_ls_budget,
                              check_step_size_lower_bound,
                              contraction_ratio_series,
                              contraction_report_from_run,
                              transition_points_uniform)
from snpe.oracles import OracleConfig, make_oracle
from snpe.problems import (QuadraticProblem, generate_synthetic_lse,
                           lse_gradient, lse_hessian, lse_value,
                           random_finite_sum)
from snpe.solvers import SNPEConfig, newton_step_iterative, run
from snpe.util import sym_spectral_norm


def report(name, ok, detail=""):
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def battery():
    """A spread of converged solver runs with snapshots for the recheck gates."""
    runs = []

    p = QuadraticProblem(H=np.eye(3))
    cfg = SNPEConfig(alpha=0.5, beta=0.5, mu=1.0, grad_norm_tol=1e-12,
                     max_iters=120, capture_snapshots=True)
    runs.append(("quadratic-exact", p, cfg, run(cfg, p, np.array([1.0, -2.0, 0.5]),
                                                x_ref=np.zeros(3))))

    p = generate_synthetic_lse(300, 20, 0.05, 1e-3, seed=5)
    x_ref, f_ref = compute_reference(p)
    cfg = SNPEConfig(mu=1e-3, oracle=OracleConfig("subsample", s=10, seed=3),
                     f_gap_tol=1e-10, max_iters=500, capture_snapshots=True)
    runs.append(("lse-subsample", p, cfg, run(cfg, p, np.zeros(20),
                                              x_ref=x_ref, f_ref=f_ref)))

    p = generate_synthetic_lse(200, 12, 0.2, 1e-2, seed=9)
    cfg = SNPEConfig(mu=1e-2, oracle=OracleConfig("sketch", s=6, seed=4),
                     averaging=WeightScheme("log_power"), grad_norm_tol=1e-9,
                     max_iters=400, capture_snapshots=True)
    runs.append(("lse-sketch-logpower", p, cfg, run(cfg, p, np.zeros(12))))

    p = QuadraticProblem(H=np.diag([0.5, 1.0, 2.0, 5.0]))
    cfg = SNPEConfig(alpha=0.5, mu=0.5, grad_norm_tol=1e-10, max_iters=400,
                     oracle=OracleConfig("additive_noise", upsilon_e=2.0, seed=8),
                     capture_snapshots=True)
    runs.append(("quadratic-noisy", p, cfg, run(cfg, p, np.full(4, 2.0),
                                                x_ref=np.zeros(4))))

    p = generate_synthetic_lse(200, 12, 0.2, 1e-2, seed=13)
    cfg = SNPEConfig(mu=1e-2, oracle=OracleConfig("subsample", s=6, seed=6),
                     linear_solver="iterative", grad_norm_tol=1e-9,
                     max_iters=400, capture_snapshots=True)
    runs.append(("lse-iterative", p, cfg, run(cfg, p, np.zeros(12))))

    for label, _, _, result in runs:
        assert result.converged, f"battery run {label} did not converge"
    return runs


def test_acceptance_condition_recheck(battery):
    checked = 0
    for label, problem, cfg, result in battery:
        for r in result.records:
            assert r.accept_residual <= r.accept_rhs * (1.0 + 1e-12) + 1e-14, \
                f"{label} t={r.t}"
            ok, _, _ = check_hpe_condition(r.x, r.x_hat, r.eta, cfg.mu,
                                           problem.gradient(r.x_hat), cfg.alpha)
            assert ok, f"{label} t={r.t} recheck from snapshots"
            checked += 1
    report("acceptance inequality holds at every iteration", True,
           f"{checked} iterations rechecked")


@pytest.fixture(scope="module")
def contraction_runs():
    p = generate_synthetic_lse(2000, 50, 0.05, 1e-3, seed=42)
    x_ref, f_ref = compute_reference(p)
    out = {}
    for kind in ("uniform", "log_power"):
        cfg = SNPEConfig(mu=1e-3, oracle=OracleConfig("subsample", s=50, seed=11),
                         averaging=WeightScheme(kind), f_gap_tol=1e-10,
                         max_iters=800)
        res = run(cfg, p, np.zeros(50), x_ref=x_ref, f_ref=f_ref)
        assert res.converged
        out[kind] = (cfg, res)
    return p, x_ref, f_ref, out


def test_distance_contraction_both_schemes(contraction_runs):
    _, _, _, runs = contraction_runs
    details = []
    for kind, (cfg, res) in runs.items():
        rep = contraction_report_from_run(res, cfg.mu)
        assert rep.ok, f"{kind}: failures at {rep.failures}"
        details.append(f"{kind}: {rep.n_checked} steps, worst margin {rep.worst_margin:.6f}")
    report("distance contraction at every iteration, both schemes", True,
           "; ".join(details))


def test_line_search_budget(battery, contraction_runs):
    _, _, _, runs = contraction_runs
    all_runs = [(label, cfg, res) for label, _, cfg, res in battery]
    all_runs += [(kind, cfg, res) for kind, (cfg, res) in runs.items()]
    for label, cfg, res in all_runs:
        ok, excess = check_ls_budget([r.ls_steps for r in res.records],
                                     [r.eta for r in res.records],
                                     cfg.sigma0, cfg.beta)
        assert ok, f"{label}: budget exceeded by {excess}"
    report("cumulative line-search budget within bound on every run", True,
           f"{len(all_runs)} runs")


def test_step_size_lower_bound(battery):
    n_backtracked = 0
    for label, problem, cfg, result in battery:
        for r in result.records:
            if not r.backtracked:
                continue
            n_backtracked += 1
            assert check_step_size_lower_bound(
                r, cfg.alpha, cfg.beta, cfg.mu, problem=problem,
                solver_kind=cfg.linear_solver), f"{label} t={r.t}"
            cap = (1.0 if cfg.linear_solver == "direct" else 3.0) / cfg.beta
            x_norm = float(np.linalg.norm(r.x_tilde - r.x))
            step_norm = float(np.linalg.norm(r.x_hat - r.x))
            assert x_norm <= cap * step_norm * (1.0 + 1e-8), f"{label} t={r.t}"
    assert n_backtracked > 0
    report("step-size lower bound on every backtracked iteration", True,
           f"{n_backtracked} backtracked iterations")


def test_averaging_equivalence():
    rng = np.random.default_rng(31)
    draws = [random_psd(8, rng) for _ in range(65)]
    worst = 0.0
    for kind in ("uniform", "log_power"):
        scheme = WeightScheme(kind)
        state = AveragerState(scheme=scheme)
        for t, h in enumerate(draws):
            state = update(state, h)
            z = explicit_weights(scheme, t)
            offline = sum(zi * hi for zi, hi in zip(z, draws[: t + 1]))
            worst = max(worst, sym_spectral_norm(state.h_avg - offline))
    assert worst <= 1e-10
    report("online averaging equals explicit weights for t <= 64", True,
           f"worst gap {worst:.2e}")


def test_oracle_unbiasedness():
    draws = 100_000
    errs = {}

    p = random_finite_sum(8, 6, seed=17, mu=0.1)
    oracle = make_oracle(OracleConfig("subsample", s=2, seed=21), p)
    x = np.zeros(6)
    h = p.hessian(x)
    acc = np.zeros_like(h)
    for _ in range(draws):
        acc += oracle.draw(x).h_hat
    errs["subsample"] = sym_spectral_norm(acc / draws - h) / sym_spectral_norm(h)

    p = generate_synthetic_lse(50, 5, 0.5, 0.1, seed=8)
    oracle = make_oracle(OracleConfig("sketch", s=10, seed=22), p)
    x = np.zeros(5)
    h = p.hessian(x)
    acc = np.zeros_like(h)
    for _ in range(draws):
        acc += oracle.draw(x).h_hat
    errs["sketch"] = sym_spectral_norm(acc / draws - h) / sym_spectral_norm(h)

    p = QuadraticProblem(H=10.0 * np.eye(8))
    oracle = make_oracle(OracleConfig("additive_noise", upsilon_e=1.0, seed=23), p)
    x = np.zeros(8)
    h = p.hessian(x)
    acc = np.zeros_like(h)
    for _ in range(draws):
        acc += oracle.draw(x).h_hat
    assert oracle.clip_count == 0
    errs["additive_noise"] = sym_spectral_norm(acc / draws - h) / sym_spectral_norm(h)

    for mode, err in errs.items():
        assert err < 0.02, f"{mode}: {err}"
    report("oracle draw means within 2% over 1e5 draws", True,
           "; ".join(f"{m}: {e:.4f}" for m, e in errs.items()))


def test_averaged_noise_concentration_ensemble():
    d, upsilon_e, delta = 20, 1.0, 0.01
    t_lo = math.ceil(4.0 * math.log(d / delta))
    t_hi = 1024
    problem = QuadraticProblem(H=10.0 * np.eye(d))
    h = problem.hessian(np.zeros(d))
    passes = 0
    for seed in range(20):
        oracle = make_oracle(OracleConfig("additive_noise", upsilon_e=upsilon_e,
                                          seed=9000 + seed), problem)
        acc = np.zeros((d, d))
        ok = True
        for t in range(t_hi + 1):
            acc += oracle.draw(np.zeros(d)).h_hat - h
            if t_lo <= t and sym_spectral_norm(acc / (t + 1)) > \
                    averaged_noise_envelope(upsilon_e, d, delta, t):
                ok = False
                break
        assert oracle.clip_count == 0
        passes += int(ok)
    assert passes >= 19
    report("averaged-noise concentration envelope ensemble", True,
           f"{passes}/20 runs inside the envelope for t in [{t_lo}, {t_hi}]")


def test_superlinear_witness(contraction_runs):
    p, x_ref, f_ref, runs = contraction_runs
    cfg = SNPEConfig(mu=1e-3, oracle=OracleConfig("exact"),
                     averaging=WeightScheme("latest"), grad_norm_tol=1e-10,
                     max_iters=60)
    npe = run(cfg, p, np.zeros(50), x_ref=x_ref, f_ref=f_ref)
    assert npe.converged
    dists = [r.dist_to_ref for r in npe.records] + [npe.dist_final]
    ratios = contraction_ratio_series(dists)
    assert np.min(ratios[:40]) < 1e-2
    assert np.all(np.diff(ratios[-5:]) < 0)

    _, snpe_res = runs["uniform"]
    sdists = [r.dist_to_ref for r in snpe_res.records] + [snpe_res.dist_final]
    sratios = contraction_ratio_series(sdists)
    k = len(sratios) // 4
    assert np.min(sratios) < 0.75
    assert np.median(sratios[-k:]) < np.median(sratios[:k])
    report("superlinear contraction-ratio witness", True,
           f"exact-oracle min ratio {np.min(ratios):.2e} in {len(ratios)} steps; "
           f"subsampled ratios {np.median(sratios[:k]):.2f} -> {np.median(sratios[-k:]):.2f}")


def test_desk_scale_ordering(tmp_path):
    tic = time.perf_counter()
    doc = {
        "problem": {"type": "lse", "n": 10000, "d": 100, "rho": 0.02,
                    "lambda": 1e-3, "seed": 101},
        "solvers": [
            {"solver": "snpe", "label": "snpe", "alpha": 0.9, "beta": 0.5,
             "sigma0": 1.0, "mu": 1e-3, "averaging": {"kind": "uniform"},
             "oracle": {"mode": "subsample", "s": 100},
             "disable_extragradient": True, "max_iters": 2000},
            {"solver": "stochastic_newton", "label": "stochastic_newton",
             "mu": 1e-3, "averaging": {"kind": "uniform"},
             "oracle": {"mode": "subsample", "s": 100}, "max_iters": 4000},
            {"solver": "agd", "label": "agd", "mu": 1e-3, "max_iters": 30000},
        ],
        "seeds": [1, 2, 3, 4, 5],
        "stop": {"f_gap_tol": 1e-9},
        "output_dir": str(tmp_path / "desk"),
    }
    manifest = run_experiment(ExperimentConfig.from_json(doc))
    assert all(r["status"] == "ok" for r in manifest["runs"])

    iters = {}
    for entry in manifest["runs"]:
        rows = parse_trace(tmp_path / "desk" / entry["trace"])
        meta = json.loads((tmp_path / "desk" / entry["meta"]).read_text())
        assert verify_trace(rows, meta) == [], entry["trace"]
        iters[(entry["label"], entry["seed"])] = iterations_to_gap(
            rows, meta["final"]["f_gap"], 1e-8)

    seeds = [1, 2, 3, 4, 5]
    wins = sum(iters[("snpe", s)] < iters[("stochastic_newton", s)] for s in seeds)
    assert wins >= 4, f"extragradient-free solver faster in only {wins}/5 seeds"
    worst_second_order = max(max(iters[("snpe", s)] for s in seeds),
                             max(iters[("stochastic_newton", s)] for s in seeds))
    agd_iters = min(iters[("agd", s)] for s in seeds)
    assert math.isfinite(worst_second_order)
    assert agd_iters > worst_second_order
    elapsed = time.perf_counter() - tic
    assert elapsed < 600.0
    report("desk-scale iteration-count ordering", True,
           f"wins {wins}/5; agd {agd_iters:.0f} > second-order worst "
           f"{worst_second_order:.0f}; {elapsed:.0f}s")


def test_transition_point_calculator():
    c = TheoryConstants(mu=1.0, M1=1.0, L2=1.0, upsilon=1.0, delta=0.1, nu=0.5,
                        D=1.0, alpha=0.5, beta=0.5, sigma0=1.0, d=10)
    rep = transition_points_uniform(c)
    assert rep.T1 == pytest.approx(256.0 * math.log(80.0), abs=1e-9)
    lhs = 64.0 * (rep.T3 + 1.0) * math.log(c.d * (rep.T3 + 1.0) / c.delta)
    rhs = 9.0 * c.kappa ** 2 * rep.I ** 2 / c.upsilon ** 2
    assert abs(lhs - rhs) <= 1e-6 * rhs
    report("transition-point calculator", True,
           f"T1 = {rep.T1:.6f}, T3 residual {abs(lhs - rhs) / rhs:.2e}")


def test_finite_difference_oracle():
    p = generate_synthetic_lse(25, 5, 0.5, 0.2, seed=77)
    rng = np.random.default_rng(78)
    worst_g, worst_h = 0.0, 0.0
    for _ in range(20):
        x = rng.standard_normal(5) * 0.5
        worst_g = max(worst_g, rel_err(fd_gradient(lambda v: lse_value(p, v), x),
                                       lse_gradient(p, x)))
        worst_h = max(worst_h, rel_err(fd_jacobian(lambda v: lse_gradient(p, v), x, h=3e-6),
                                       lse_hessian(p, x)))
    assert worst_g < 1e-5 and worst_h < 1e-5
    report("derivatives match central finite differences", True,
           f"gradient {worst_g:.2e}, Hessian {worst_h:.2e}")


def test_inexact_solve_sandwich():
    rng = np.random.default_rng(55)
    alpha = 0.5
    for _ in range(50):
        dim = int(rng.integers(5, 40))
        h = random_psd(dim, rng, floor=float(rng.uniform(0.01, 1.0)))
        g = rng.standard_normal(dim)
        eta = 10.0 ** rng.uniform(-2, 3)
        d = newton_step_iterative(h, g, eta, alpha)
        a = np.eye(dim) + eta * h
        assert np.linalg.norm(a @ d + eta * g) <= 0.5 * alpha * np.linalg.norm(d)
        d_exact = np.linalg.solve(a, -eta * g)
        assert np.linalg.norm(d - d_exact) <= alpha * np.linalg.norm(d_exact)
    report("inexact linear-solve residual rule and sandwich", True,
           "50 random SPD systems")
