#!/usr/bin/env python3
"""Estimate run constants for a synthetic problem and print its phase report.

Measures the noise level of a configured oracle by Monte Carlo, proxies the
Hessian-variation bound by power iteration, and feeds everything to the
transition-point calculators:

    python3 scripts/phase_report.py --n 2000 --d 50 --rho 0.05 --lam 1e-3 --s 50
"""

import argparse

import numpy as np

from snpe.averaging import WeightScheme
from snpe.bench import compute_reference
from snpe.diagnostics import (ScanCapExceeded, TheoryConstants,
                              estimate_m1_proxy, max_admissible_nu,
                              transition_points_uniform,
                              transition_points_weighted)
from snpe.oracles import OracleConfig, estimate_noise_level, make_oracle
from snpe.problems import generate_synthetic_lse


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=2000)
    parser.add_argument("--d", type=int, default=50)
    parser.add_argument("--rho", type=float, default=0.05)
    parser.add_argument("--lam", type=float, default=1e-3)
    parser.add_argument("--s", type=int, default=50)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--alpha", type=float, default=0.25)
    parser.add_argument("--beta", type=float, default=0.5)
    parser.add_argument("--delta", type=float, default=0.01)
    parser.add_argument("--draws", type=int, default=500)
    args = parser.parse_args()

    problem = generate_synthetic_lse(args.n, args.d, args.rho, args.lam, args.seed)
    x_ref, _ = compute_reference(problem)
    x0 = np.zeros(args.d)

    oracle = make_oracle(OracleConfig("subsample", s=args.s, seed=args.seed), problem)
    upsilon_e = estimate_noise_level(oracle, problem, x_ref, draws=args.draws)
    m1 = estimate_m1_proxy(problem, x_ref)
    mu = args.lam
    nu = min(1.0, max_admissible_nu(args.alpha, args.beta))
    constants = TheoryConstants(
        mu=mu, M1=m1, L2=m1 / args.rho, upsilon=max(upsilon_e / mu, 1e-12),
        delta=args.delta, nu=nu, D=float(np.linalg.norm(x0 - x_ref)) or 1.0,
        alpha=args.alpha, beta=args.beta, sigma0=1.0, d=args.d)

    print(f"estimated noise level: {upsilon_e:.4g} (relative {constants.upsilon:.4g})")
    print(f"Hessian variation proxy M1 = {m1:.4g}, kappa = {constants.kappa:.4g}")
    print(f"max admissible locality nu = {nu:.4g}")

    rep = transition_points_uniform(constants)
    print(f"uniform:  T1 = {rep.T1:.4g}  I = {rep.I:.4g}  "
          f"T2 = {rep.T2:.4g}  T3 = {rep.T3:.4g}")
    try:
        rep = transition_points_weighted(constants, WeightScheme("log_power"))
        print(f"weighted: U1 = {rep.U1:.4g}  J = {rep.J:.4g}  U2 = {rep.U2:.4g}")
    except ScanCapExceeded as exc:
        partial = exc.partial
        print(f"weighted: beyond the 1e7 scan cap at this noise level "
              f"(partial: U1 = {partial.U1}, J = {partial.J})")


if __name__ == "__main__":
    main()
