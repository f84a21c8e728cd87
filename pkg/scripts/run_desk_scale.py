#!/usr/bin/env python3
"""Desk-scale comparison suite on the regularized log-sum-exp objective.

Runs the extragradient solver (with and without the extragradient step), the
averaged-Hessian Newton baseline, exact-Hessian damped Newton, the exact-oracle
proximal extragradient method, and accelerated gradient descent over shared
seeds, writing per-iteration traces plus a manifest that the plot tool
consumes:

    python3 scripts/run_desk_scale.py --out out/desk_scale
    plot --manifest out/desk_scale/manifest.json --kind iterations --out fig1.png
"""

import argparse
import json
import sys
from pathlib import Path

from snpe.bench import ExperimentConfig, run_experiment, parse_trace, verify_trace


def build_config(out_dir, small=False):
    n, d, s = (1000, 30, 30) if small else (10000, 100, 100)
    seeds = [1, 2, 3] if small else [1, 2, 3, 4, 5]
    snpe_common = {
        "alpha": 0.9, "beta": 0.5, "sigma0": 1.0, "mu": 1e-3,
        "averaging": {"kind": "uniform"},
        "oracle": {"mode": "subsample", "s": s},
        "max_iters": 2000,
    }
    return {
        "problem": {"type": "lse", "n": n, "d": d, "rho": 0.02,
                    "lambda": 1e-3, "seed": 101},
        "solvers": [
            {"solver": "snpe", "label": "snpe",
             "disable_extragradient": False, **snpe_common},
            {"solver": "snpe", "label": "snpe_no_eg",
             "disable_extragradient": True, **snpe_common},
            {"solver": "stochastic_newton", "label": "stochastic_newton",
             "mu": 1e-3, "averaging": {"kind": "uniform"},
             "oracle": {"mode": "subsample", "s": s}, "max_iters": 4000},
            {"solver": "npe", "label": "npe", "alpha": 0.9, "beta": 0.5,
             "sigma0": 1.0, "mu": 1e-3, "max_iters": 500},
            {"solver": "damped_newton", "label": "damped_newton", "max_iters": 200},
            {"solver": "agd", "label": "agd", "mu": 1e-3, "max_iters": 30000},
        ],
        "seeds": seeds,
        "stop": {"f_gap_tol": 1e-9},
        "reference": {"solver": "damped_newton", "grad_tol": 1e-12},
        "output_dir": str(out_dir),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="out/desk_scale")
    parser.add_argument("--small", action="store_true",
                        help="shrunken smoke-test grid")
    parser.add_argument("--verify", action="store_true",
                        help="re-check invariants on every trace afterwards")
    args = parser.parse_args(argv)

    out_dir = Path(args.out)
    config = build_config(out_dir, small=args.small)
    manifest = run_experiment(ExperimentConfig.from_json(config))

    failed = [r for r in manifest["runs"] if r["status"] != "ok"]
    for r in failed:
        print(f"FAILED {r['label']} seed {r['seed']}: {r['error']}", file=sys.stderr)
    print(f"{len(manifest['runs']) - len(failed)} runs complete; "
          f"manifest at {out_dir / 'manifest.json'}")

    if args.verify:
        bad = 0
        for entry in manifest["runs"]:
            if entry["status"] != "ok":
                continue
            rows = parse_trace(out_dir / entry["trace"])
            meta = json.loads((out_dir / entry["meta"]).read_text())
            for v in verify_trace(rows, meta):
                print(f"{entry['trace']}: {v}", file=sys.stderr)
                bad += 1
        print("verification clean" if not bad else f"{bad} violations")
        return 2 if bad else 0
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
