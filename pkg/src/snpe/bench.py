"""Experiment runner: problems, references, solver suites, CSV traces, manifest.

Each solver x seed cell runs in isolation with its own oracle stream derived
from (seed, solver label), so reordering or parallelizing cells never changes
results.  Traces are written as CSV with a fixed column order and floats at
17 significant digits (lossless for binary64); wall-clock timing is recorded
but excluded from the determinism hash.
"""

from __future__ import annotations

import concurrent.futures
import json
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .averaging import WeightScheme
from .diagnostics import (check_contraction, check_ls_budget,
                          check_step_size_lower_bound)
from .oracles import OracleConfig, make_oracle
from .problems import problem_from_json, problem_to_json
from .solvers import (AGDConfig, DampedNewtonConfig, RunResult, SNPEConfig,
                      StochasticNewtonConfig, run, run_agd, run_damped_newton,
                      run_stochastic_newton)
from .util import freeze, sha256_file, sha256_text, stable_u64

__all__ = [
    "TraceRow",
    "TRACE_FIELDS",
    "ExperimentConfig",
    "SolverSpec",
    "compute_reference",
    "run_experiment",
    "run_cell",
    "write_trace",
    "parse_trace",
    "trace_text",
    "determinism_hash",
    "verify_trace",
    "iterations_to_gap",
]

TRACE_FIELDS = ["solver", "seed", "t", "wall_time_ms", "f_gap", "grad_norm",
                "dist_to_ref", "eta", "gamma", "ls_steps", "backtracked"]

_SNPE_LIKE = ("snpe", "npe")


@dataclass
class TraceRow:
    solver: str
    seed: int
    t: int
    wall_time_ms: float
    f_gap: float
    grad_norm: float
    dist_to_ref: float
    eta: float
    gamma: float
    ls_steps: int
    backtracked: bool


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _row_line(row: TraceRow) -> str:
    return ",".join(_fmt(getattr(row, name)) for name in TRACE_FIELDS)


def trace_text(rows) -> str:
    lines = [",".join(TRACE_FIELDS)]
    lines.extend(_row_line(r) for r in rows)
    return "\n".join(lines) + "\n"


def write_trace(path, rows) -> None:
    Path(path).write_text(trace_text(rows), encoding="utf-8", newline="\n")


def parse_trace(path) -> list:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    if header != TRACE_FIELDS:
        raise ValueError(f"unexpected trace header {header}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rows.append(TraceRow(
            solver=parts[0], seed=int(parts[1]), t=int(parts[2]),
            wall_time_ms=float(parts[3]), f_gap=float(parts[4]),
            grad_norm=float(parts[5]), dist_to_ref=float(parts[6]),
            eta=float(parts[7]), gamma=float(parts[8]), ls_steps=int(parts[9]),
            backtracked=parts[10] == "true"))
    return rows


def determinism_hash(rows) -> str:
    """Content hash of a trace with the wall-clock column masked out."""
    masked = []
    for r in rows:
        vals = [_fmt(getattr(r, name)) if name != "wall_time_ms" else "*"
                for name in TRACE_FIELDS]
        masked.append(",".join(vals))
    return sha256_text("\n".join(masked))


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass
class SolverSpec:
    name: str
    params: dict = field(default_factory=dict)
    label: Optional[str] = None

    def __post_init__(self):
        if self.name not in ("snpe", "npe", "stochastic_newton", "damped_newton", "agd"):
            raise ValueError(f"unknown solver {self.name!r}")
        if self.label is None:
            self.label = self.name


@dataclass
class ExperimentConfig:
    problem: dict
    solvers: list
    seeds: list
    output_dir: str
    reference: dict = field(default_factory=lambda: {"solver": "damped_newton",
                                                     "grad_tol": 1e-12})
    stop: dict = field(default_factory=dict)
    x0: Optional[list] = None

    def __post_init__(self):
        if not self.solvers:
            raise ValueError("experiment needs at least one solver")
        if not self.seeds:
            raise ValueError("experiment needs at least one seed")
        self.solvers = [s if isinstance(s, SolverSpec) else
                        SolverSpec(name=s.pop("name") if "name" in s else s.pop("solver"),
                                   label=s.pop("label", None), params=s)
                        for s in [dict(s) if isinstance(s, dict) else s for s in self.solvers]]

    @staticmethod
    def from_json(doc: dict) -> "ExperimentConfig":
        return ExperimentConfig(
            problem=doc["problem"], solvers=doc["solvers"],
            seeds=[int(s) for s in doc["seeds"]],
            output_dir=doc.get("output_dir", "out"),
            reference=doc.get("reference", {"solver": "damped_newton", "grad_tol": 1e-12}),
            stop=doc.get("stop", {}), x0=doc.get("x0"))


# ---------------------------------------------------------------------------
# reference solutions

_REFERENCE_CACHE: dict = {}


def compute_reference(problem, grad_tol: float = 1e-12, max_iters: int = 500):
    """High-accuracy minimizer via exact-Hessian damped Newton, cached per problem."""
    key = (sha256_text(json.dumps(problem_to_json(problem), sort_keys=True)), grad_tol)
    if key in _REFERENCE_CACHE:
        return _REFERENCE_CACHE[key]
    cfg = DampedNewtonConfig(grad_norm_tol=grad_tol, max_iters=max_iters)
    res = run_damped_newton(cfg, problem, np.zeros(problem.dim))
    if not res.converged:
        raise RuntimeError(f"reference solve did not converge within {max_iters} iterations")
    out = (freeze(res.x_final), float(res.f_final))
    _REFERENCE_CACHE[key] = out
    return out


# ---------------------------------------------------------------------------
# cells


def _pop_stop(params: dict, stop_defaults: dict):
    grad_tol = params.pop("grad_norm_tol", stop_defaults.get("grad_norm_tol"))
    f_gap_tol = params.pop("f_gap_tol", stop_defaults.get("f_gap_tol"))
    return grad_tol, f_gap_tol


def cell_seed_sequence(seed: int, label: str) -> np.random.SeedSequence:
    """Independent, order-insensitive RNG stream for one solver x seed cell."""
    return np.random.SeedSequence(entropy=(int(seed) & (2 ** 64 - 1), stable_u64(label)))


def run_cell(problem, spec: SolverSpec, seed: int, x_ref, f_ref,
             stop_defaults: Optional[dict] = None, x0=None):
    """Run one solver x seed cell; returns (RunResult, meta dict)."""
    stop_defaults = stop_defaults or {}
    params = dict(spec.params)
    grad_tol, f_gap_tol = _pop_stop(params, stop_defaults)
    x0 = np.zeros(problem.dim) if x0 is None else np.asarray(x0, dtype=float)
    name = spec.name

    meta = {"solver": name, "label": spec.label, "seed": int(seed),
            "disable_extragradient": bool(params.get("disable_extragradient", False))}

    if name in _SNPE_LIKE:
        default_scheme = {"kind": "latest"} if name == "npe" else {"kind": "uniform"}
        averaging_doc = params.pop("averaging", default_scheme)
        oracle_doc = dict(params.pop("oracle", {"mode": "exact"}))
        if name == "npe":
            oracle_doc = {"mode": "exact"}
        explicit_seed = oracle_doc.pop("seed", None)
        cfg = SNPEConfig(averaging=WeightScheme.from_json(averaging_doc),
                         oracle=OracleConfig.from_json({**oracle_doc, "seed": 0}),
                         grad_norm_tol=grad_tol, f_gap_tol=f_gap_tol, **params)
        seq = (np.random.SeedSequence(explicit_seed) if explicit_seed is not None
               else cell_seed_sequence(seed, spec.label))
        oracle = make_oracle(cfg.oracle, problem, seed_sequence=seq)
        result = run(cfg, problem, x0, x_ref=x_ref, f_ref=f_ref, oracle=oracle)
        meta.update(alpha=cfg.alpha, beta=cfg.beta, sigma0=cfg.sigma0, mu=cfg.mu,
                    linear_solver=cfg.linear_solver,
                    disable_extragradient=cfg.disable_extragradient,
                    averaging=cfg.averaging.to_json(), oracle=oracle_doc)
        meta["diagnostics"] = _snpe_diagnostics(result, cfg)
    elif name == "stochastic_newton":
        averaging_doc = params.pop("averaging", {"kind": "uniform"})
        oracle_doc = dict(params.pop("oracle", {"mode": "exact"}))
        explicit_seed = oracle_doc.pop("seed", None)
        cfg = StochasticNewtonConfig(averaging=WeightScheme.from_json(averaging_doc),
                                     oracle=OracleConfig.from_json({**oracle_doc, "seed": 0}),
                                     grad_norm_tol=grad_tol, f_gap_tol=f_gap_tol, **params)
        seq = (np.random.SeedSequence(explicit_seed) if explicit_seed is not None
               else cell_seed_sequence(seed, spec.label))
        oracle = make_oracle(cfg.oracle, problem, seed_sequence=seq)
        result = run_stochastic_newton(cfg, problem, x0, x_ref=x_ref, f_ref=f_ref,
                                       oracle=oracle)
        meta.update(mu=cfg.mu, averaging=cfg.averaging.to_json(), oracle=oracle_doc)
    elif name == "damped_newton":
        cfg = DampedNewtonConfig(grad_norm_tol=grad_tol, f_gap_tol=f_gap_tol, **params)
        result = run_damped_newton(cfg, problem, x0, x_ref=x_ref, f_ref=f_ref)
    elif name == "agd":
        cfg = AGDConfig(grad_norm_tol=grad_tol, f_gap_tol=f_gap_tol, **params)
        result = run_agd(cfg, problem, x0, x_ref=x_ref, f_ref=f_ref)
    else:  # pragma: no cover - guarded by SolverSpec
        raise ValueError(f"unknown solver {name!r}")

    meta.update(converged=result.converged, n_iters=result.n_iters,
                info=result.info,
                final={"f_gap": result.f_final - f_ref,
                       "grad_norm": result.grad_norm_final,
                       "dist_to_ref": result.dist_final})
    return result, meta


def _snpe_diagnostics(result: RunResult, cfg: SNPEConfig) -> dict:
    recs = result.records
    eq3_worst = 0.0
    eq3_ok = True
    for r in recs:
        slack = r.accept_rhs * (1.0 + 1e-12) + 1e-14
        eq3_worst = max(eq3_worst, r.accept_residual - r.accept_rhs)
        if r.accept_residual > slack:
            eq3_ok = False
    budget_ok, budget_excess = (True, 0.0)
    if recs:
        budget_ok, budget_excess = check_ls_budget(
            [r.ls_steps for r in recs], [r.eta for r in recs], cfg.sigma0, cfg.beta)
    lemma2_ok = all(check_step_size_lower_bound(r, cfg.alpha, cfg.beta, cfg.mu,
                                                solver_kind=cfg.linear_solver)
                    for r in recs)
    diag = {"eq3_ok": eq3_ok, "eq3_worst_excess": eq3_worst,
            "ls_budget_ok": budget_ok, "ls_budget_excess": budget_excess,
            "step_bound_ok": lemma2_ok}
    if not cfg.disable_extragradient and result.dist_final is not None \
            and all(r.dist_to_ref is not None for r in recs):
        dists = [r.dist_to_ref for r in recs] + [result.dist_final]
        rep = check_contraction(dists, [r.eta for r in recs], cfg.mu)
        diag["contraction_ok"] = rep.ok
        diag["contraction_worst_margin"] = rep.worst_margin
    return diag


def _rows_from_result(result: RunResult, label: str, seed: int, f_ref: float):
    rows = []
    for r in result.records:
        rows.append(TraceRow(
            solver=label, seed=int(seed), t=r.t, wall_time_ms=r.wall_time_ms,
            f_gap=r.f_value - f_ref, grad_norm=r.grad_norm,
            dist_to_ref=r.dist_to_ref if r.dist_to_ref is not None else -1.0,
            eta=r.eta, gamma=r.gamma, ls_steps=r.ls_steps, backtracked=r.backtracked))
    return rows


# ---------------------------------------------------------------------------
# the experiment loop


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", label)


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every solver x seed cell, write traces + metas + manifest.

    Per-cell failures are quarantined into the manifest without aborting the
    suite.  Worker parallelism is capped by the SNPE_THREADS environment
    variable; output files are written serially by the main thread.
    """
    problem = problem_from_json(config.problem)
    ref_spec = config.reference
    if ref_spec.get("solver", "damped_newton") != "damped_newton":
        raise ValueError("only a damped-Newton reference is supported")
    x_ref, f_ref = compute_reference(problem, grad_tol=float(ref_spec.get("grad_tol", 1e-12)))

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    cells = [(spec, seed) for spec in config.solvers for seed in config.seeds]
    threads = max(1, int(os.environ.get("SNPE_THREADS", "1")))

    def work(cell):
        spec, seed = cell
        try:
            result, meta = run_cell(problem, spec, seed, x_ref, f_ref,
                                    stop_defaults=config.stop, x0=config.x0)
            return ("ok", spec, seed, result, meta)
        except Exception as exc:  # noqa: BLE001 - quarantined into the manifest
            return ("failed", spec, seed, None, {"error": f"{type(exc).__name__}: {exc}"})

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, cells))
    else:
        outcomes = [work(c) for c in cells]

    config_doc = {"problem": config.problem,
                  "solvers": [{"name": s.name, "label": s.label, **s.params}
                              for s in config.solvers],
                  "seeds": config.seeds, "reference": config.reference,
                  "stop": config.stop, "output_dir": config.output_dir}
    manifest = {
        "config": config_doc,
        "config_hash": sha256_text(json.dumps(config_doc, sort_keys=True)),
        "seeds": config.seeds,
        "problem": config.problem,
        "reference": {"solver": "damped_newton",
                      "grad_tol": float(ref_spec.get("grad_tol", 1e-12)),
                      "f_ref": f_ref},
        "library": {"python": sys.version.split()[0], "numpy": np.__version__},
        "snpe_threads": threads,
        "runs": [],
        "files": {},
    }

    for status, spec, seed, result, meta in outcomes:
        entry = {"solver": spec.name, "label": spec.label, "seed": int(seed),
                 "status": status,
                 "disable_extragradient": bool(spec.params.get("disable_extragradient",
                                                               False))}
        if status == "ok":
            base = f"{_slug(spec.label)}__seed{seed}"
            trace_path = out_dir / f"{base}.csv"
            meta_path = out_dir / f"{base}.meta.json"
            rows = _rows_from_result(result, spec.label, seed, f_ref)
            meta["determinism_hash"] = determinism_hash(rows)
            write_trace(trace_path, rows)
            meta_path.write_text(json.dumps(meta, indent=2, default=float) + "\n",
                                 encoding="utf-8")
            entry["trace"] = trace_path.name
            entry["meta"] = meta_path.name
            entry["determinism_hash"] = meta["determinism_hash"]
        else:
            entry["error"] = meta.get("error", "unknown failure")
        manifest["runs"].append(entry)

    for entry in manifest["runs"]:
        for key in ("trace", "meta"):
            if key in entry:
                manifest["files"][entry[key]] = sha256_file(out_dir / entry[key])

    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n",
                                           encoding="utf-8")
    return manifest


# ---------------------------------------------------------------------------
# trace verification


def _eta_chain_value(sigma: float, ls_steps: int, beta: float) -> float:
    v = sigma
    for _ in range(ls_steps - 1):
        v *= beta
    return v


def verify_trace(rows, meta) -> list:
    """Re-check every invariant recoverable from a trace CSV plus its meta.

    Returns a list of violation strings; empty means the trace is clean.
    """
    violations = []
    for i, r in enumerate(rows):
        if r.t != i:
            violations.append(f"row {i}: t={r.t} is not strictly increasing from 0")
            break
    for r in rows:
        if r.f_gap < -1e-12:
            violations.append(f"t={r.t}: f_gap={r.f_gap} below -1e-12")

    if meta.get("solver") in _SNPE_LIKE:
        mu = float(meta["mu"])
        beta = float(meta["beta"])
        sigma0 = float(meta["sigma0"])
        for r in rows:
            expected = 1.0 + 2.0 * r.eta * mu
            if abs(r.gamma - expected) > 1e-12 * max(1.0, abs(expected)):
                violations.append(f"t={r.t}: gamma inconsistent with eta and mu")
            if (r.ls_steps > 1) != r.backtracked:
                violations.append(f"t={r.t}: backtracked flag inconsistent with ls_steps")
        sigma = sigma0
        for r in rows:
            expected = _eta_chain_value(sigma, r.ls_steps, beta)
            if expected != r.eta:
                violations.append(f"t={r.t}: eta breaks the warm-start recursion")
            sigma = r.eta / beta
        if rows:
            ok, excess = check_ls_budget([r.ls_steps for r in rows],
                                         [r.eta for r in rows], sigma0, beta)
            if not ok:
                violations.append(f"line-search budget exceeded by {excess}")
        diag = meta.get("diagnostics", {})
        for flag in ("eq3_ok", "ls_budget_ok", "step_bound_ok"):
            if flag in diag and not diag[flag]:
                violations.append(f"recorded diagnostics flag {flag} is false")
        if not meta.get("disable_extragradient", False):
            final_dist = meta.get("final", {}).get("dist_to_ref")
            dists = [r.dist_to_ref for r in rows]
            if final_dist is not None:
                dists = dists + [float(final_dist)]
                etas = [r.eta for r in rows]
            else:
                etas = [r.eta for r in rows[:-1]] if len(rows) > 1 else []
                dists = dists
            if len(dists) == len(etas) + 1 and etas:
                rep = check_contraction(dists, etas, mu)
                if not rep.ok:
                    violations.append(
                        f"distance contraction fails at iterations {rep.failures}")
    return violations


def iterations_to_gap(rows, final_f_gap: Optional[float], tol: float) -> float:
    """Index of the first iterate at or below the gap, inf when never reached."""
    for r in rows:
        if r.f_gap <= tol:
            return float(r.t)
    if final_f_gap is not None and final_f_gap <= tol:
        return float(len(rows))
    return float("inf")
