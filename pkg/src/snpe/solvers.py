"""Newton proximal extragradient solvers and the comparison baselines.

The main iteration alternates an inexact proximal step computed from a
regularized Newton system on the averaged stochastic Hessian, a backtracking
line search that certifies the acceptance inequality

    ||x_hat - x + eta * grad f(x_hat)|| <= alpha * sqrt(1 + 2 eta mu) * ||x_hat - x||,

and an extragradient correction.  The accepted step size seeds the next trial
step size as eta / beta so the step size can grow across iterations.

A solver run is strictly sequential and single-owner; independent runs with
their own oracle streams may execute concurrently.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from . import averaging
from .averaging import AveragerState, WeightScheme
from .oracles import HessianOracle, OracleConfig, make_oracle

__all__ = [
    "SNPEConfig",
    "StochasticNewtonConfig",
    "DampedNewtonConfig",
    "AGDConfig",
    "SolverState",
    "IterationRecord",
    "RunResult",
    "BLSResult",
    "RejectedCandidate",
    "LineSearchError",
    "LinearSolverError",
    "newton_step_direct",
    "newton_step_iterative",
    "bls",
    "extragradient_update",
    "snpe_step",
    "run",
    "run_stochastic_newton",
    "run_damped_newton",
    "run_agd",
    "power_iteration",
]


class LineSearchError(RuntimeError):
    """Backtracking exhausted its per-iteration budget (step size underflow)."""


class LinearSolverError(RuntimeError):
    """The inner linear solve failed; signals a non-PSD system or breakdown."""


# ---------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class SNPEConfig:
    alpha: float = 0.25
    beta: float = 0.5
    sigma0: float = 1.0
    mu: float = 1e-3
    averaging: WeightScheme = field(default_factory=lambda: WeightScheme("uniform"))
    oracle: OracleConfig = field(default_factory=lambda: OracleConfig("exact"))
    linear_solver: str = "direct"
    disable_extragradient: bool = False
    max_iters: int = 1000
    max_ls_steps_per_iter: int = 60
    grad_norm_tol: Optional[float] = None
    f_gap_tol: Optional[float] = None
    capture_snapshots: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.sigma0 > 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.linear_solver not in ("direct", "iterative"):
            raise ValueError(f"linear_solver must be 'direct' or 'iterative', got {self.linear_solver!r}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


@dataclass(frozen=True)
class StochasticNewtonConfig:
    mu: float = 1e-3
    averaging: WeightScheme = field(default_factory=lambda: WeightScheme("uniform"))
    oracle: OracleConfig = field(default_factory=lambda: OracleConfig("exact"))
    max_iters: int = 1000
    grad_norm_tol: Optional[float] = None
    f_gap_tol: Optional[float] = None
    eig_floor: float = 1e-12
    c1: float = 1e-4
    max_ls_steps_per_iter: int = 60


@dataclass(frozen=True)
class DampedNewtonConfig:
    c1: float = 1e-4
    max_iters: int = 500
    max_ls_steps_per_iter: int = 60
    grad_norm_tol: Optional[float] = None
    f_gap_tol: Optional[float] = None


@dataclass(frozen=True)
class AGDConfig:
    mu: float = 1e-3
    max_iters: int = 10000
    grad_norm_tol: Optional[float] = None
    f_gap_tol: Optional[float] = None
    power_iters: int = 500


# ---------------------------------------------------------------------------
# per-iteration data


@dataclass
class IterationRecord:
    t: int
    sigma: float
    eta: float
    gamma: float
    ls_steps: int
    backtracked: bool
    accept_residual: float
    accept_rhs: float
    grad_norm: float
    f_value: float
    dist_to_ref: Optional[float]
    wall_time_ms: float
    step_norm: float = 0.0
    rejected_eta: Optional[float] = None
    rejected_x_norm: Optional[float] = None
    rejected_lin_err: Optional[float] = None
    flagged: bool = False
    # optional diagnostics snapshots (enabled via capture_snapshots)
    x: Optional[np.ndarray] = None
    x_hat: Optional[np.ndarray] = None
    x_tilde: Optional[np.ndarray] = None
    h_avg: Optional[np.ndarray] = None


@dataclass
class RunResult:
    records: list
    x_final: np.ndarray
    converged: bool
    f_final: float
    grad_norm_final: float
    dist_final: Optional[float]
    info: dict = field(default_factory=dict)

    @property
    def n_iters(self) -> int:
        return len(self.records)


@dataclass
class SolverState:
    x: np.ndarray
    sigma: float
    averager: AveragerState
    t: int
    oracle: HessianOracle


# ---------------------------------------------------------------------------
# linear solves


def newton_step_direct(h_avg: np.ndarray, g: np.ndarray, eta: float) -> np.ndarray:
    """Solve (I + eta * H_avg) d = -eta * g by Cholesky with iterative refinement."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    dim = g.shape[0]
    a = eta * h_avg + np.eye(dim)
    b = -eta * g
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise LinearSolverError(f"Cholesky failed; system not positive definite: {exc}") from exc
    d = scipy.linalg.cho_solve(factor, b, check_finite=False)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(dim)
    # refinement keeps the residual at rounding level even for large eta * ||H||
    for _ in range(3):
        r = b - a @ d
        if float(np.linalg.norm(r)) <= 1e-13 * b_norm:
            break
        d = d + scipy.linalg.cho_solve(factor, r, check_finite=False)
    residual = float(np.linalg.norm(a @ d - b))
    if residual > 1e-10 * b_norm:
        raise LinearSolverError(f"direct solve residual {residual:.3e} exceeds 1e-10 * ||eta g||")
    return d


def newton_step_iterative(h_avg: np.ndarray, g: np.ndarray, eta: float, alpha: float,
                          max_iters: Optional[int] = None) -> np.ndarray:
    """Conjugate-direction solve of (I + eta * H_avg) d = -eta * g.

    Stops at the first iterate whose true residual satisfies
    ||(I + eta H) d + eta g|| <= (alpha / 2) * ||d||, which is all the outer
    acceptance test needs from the inner solve.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    dim = g.shape[0]
    a = eta * h_avg + np.eye(dim)
    b = -eta * g
    d = np.zeros(dim)
    r = b.copy()
    rs = float(r @ r)
    if rs == 0.0:
        return d
    p = r.copy()
    cap = max_iters if max_iters is not None else dim * dim
    for _ in range(cap):
        ap = a @ p
        denom = float(p @ ap)
        if denom <= 0.0:
            raise LinearSolverError("conjugate-direction breakdown: system not positive definite")
        step = rs / denom
        d = d + step * p
        r = r - step * ap
        rs_new = float(r @ r)
        if math.sqrt(rs_new) <= 0.5 * alpha * float(np.linalg.norm(d)):
            true_r = float(np.linalg.norm(a @ d - b))
            if true_r <= 0.5 * alpha * float(np.linalg.norm(d)):
                return d
        if rs_new == 0.0:
            return d
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise LinearSolverError(f"conjugate-direction cap of {cap} iterations exceeded")


def _candidate(x, g, h_avg, eta, alpha, solver_kind):
    if solver_kind == "direct":
        return newton_step_direct(h_avg, g, eta)
    return newton_step_iterative(h_avg, g, eta, alpha)


# ---------------------------------------------------------------------------
# backtracking line search and the extragradient correction


@dataclass
class RejectedCandidate:
    eta: float
    x: np.ndarray
    g: np.ndarray


@dataclass
class BLSResult:
    eta: float
    x_hat: np.ndarray
    g_hat: np.ndarray
    gamma: float
    ls_steps: int
    residual: float
    rhs: float
    rejected: Optional[RejectedCandidate]


def bls(x, g, h_avg, alpha, beta, mu, sigma, problem, solver_kind="direct",
        max_steps=60) -> BLSResult:
    """Backtrack eta through {sigma, beta sigma, beta^2 sigma, ...} until accepted.

    Each candidate solves the regularized Newton system at the current eta and
    is tested against the acceptance inequality with gamma = 1 + 2 eta mu;
    ties at the boundary are accepted.  One gradient is evaluated per
    candidate and the accepted one is handed back for reuse.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    eta = float(sigma)
    rejected = None
    for k in range(1, max_steps + 1):
        d = _candidate(x, g, h_avg, eta, alpha, solver_kind)
        x_hat = x + d
        g_hat = problem.gradient(x_hat)
        gamma = 1.0 + 2.0 * eta * mu
        lhs = float(np.linalg.norm(x_hat - x + eta * g_hat))
        rhs = alpha * math.sqrt(gamma) * float(np.linalg.norm(d))
        if lhs <= rhs:
            return BLSResult(eta=eta, x_hat=x_hat, g_hat=g_hat, gamma=gamma,
                             ls_steps=k, residual=lhs, rhs=rhs, rejected=rejected)
        rejected = RejectedCandidate(eta=eta, x=x_hat, g=g_hat)
        eta = beta * eta
    raise LineSearchError(
        f"no acceptable step after {max_steps} candidates (step size underflow)")


def extragradient_update(x, x_hat, g_hat, eta, mu) -> np.ndarray:
    """x_next = (1/gamma) (x - eta g_hat) + (1 - 1/gamma) x_hat, gamma = 1 + 2 eta mu."""
    gamma = 1.0 + 2.0 * eta * mu
    return (x - eta * g_hat) / gamma + (1.0 - 1.0 / gamma) * x_hat


# ---------------------------------------------------------------------------
# main solver


def snpe_step(state: SolverState, config: SNPEConfig, problem,
              g=None, f_val=None, x_ref=None, tic=None):
    """One iteration: oracle draw, averaging, line search, extragradient, warm start."""
    if tic is None:
        tic = time.perf_counter()
    x = state.x
    if g is None:
        g = problem.gradient(x)
    if f_val is None:
        f_val = problem.value(x)
    draw = state.oracle.draw(x)
    averager = averaging.update(state.averager, draw.h_hat)
    h_avg = averager.h_avg

    res = bls(x, g, h_avg, config.alpha, config.beta, config.mu, state.sigma,
              problem, solver_kind=config.linear_solver,
              max_steps=config.max_ls_steps_per_iter)

    if config.disable_extragradient:
        x_next = res.x_hat
    else:
        x_next = extragradient_update(x, res.x_hat, res.g_hat, res.eta, config.mu)
    sigma_next = res.eta / config.beta

    record = IterationRecord(
        t=state.t,
        sigma=state.sigma,
        eta=res.eta,
        gamma=res.gamma,
        ls_steps=res.ls_steps,
        backtracked=res.ls_steps > 1,
        accept_residual=res.residual,
        accept_rhs=res.rhs,
        grad_norm=float(np.linalg.norm(g)),
        f_value=float(f_val),
        dist_to_ref=float(np.linalg.norm(x - x_ref)) if x_ref is not None else None,
        wall_time_ms=0.0,
        step_norm=float(np.linalg.norm(res.x_hat - x)),
    )
    if res.rejected is not None:
        diff = res.rejected.x - x
        record.rejected_eta = res.rejected.eta
        record.rejected_x_norm = float(np.linalg.norm(diff))
        record.rejected_lin_err = float(np.linalg.norm(res.rejected.g - g - h_avg @ diff))
        if config.capture_snapshots:
            record.x_tilde = res.rejected.x.copy()
    if config.capture_snapshots:
        record.x = x.copy()
        record.x_hat = res.x_hat.copy()
        record.h_avg = h_avg.copy()
    record.wall_time_ms = (time.perf_counter() - tic) * 1e3

    new_state = SolverState(x=x_next, sigma=sigma_next, averager=averager,
                            t=state.t + 1, oracle=state.oracle)
    return new_state, record


def _stop_met(grad_norm, f_gap, grad_norm_tol, f_gap_tol):
    if grad_norm_tol is not None and grad_norm <= grad_norm_tol:
        return True
    if f_gap_tol is not None and f_gap is not None and f_gap <= f_gap_tol:
        return True
    return False


def _check_mu(config_mu, problem):
    declared = getattr(problem, "mu", None)
    if declared is not None and config_mu > declared and declared > 0:
        raise ValueError(
            f"config mu={config_mu} overstates the problem's strong convexity {declared}")


def run(config: SNPEConfig, problem, x0, x_ref=None, f_ref=None,
        oracle: Optional[HessianOracle] = None) -> RunResult:
    """Run the extragradient solver until a stop rule fires or max_iters is hit.

    Non-convergence within max_iters is reported through the ``converged``
    flag, never as an exception.
    """
    _check_mu(config.mu, problem)
    if config.f_gap_tol is not None and f_ref is None:
        raise ValueError("f_gap_tol stopping requires a reference value f_ref")
    if oracle is None:
        oracle = make_oracle(config.oracle, problem)
    x0 = np.array(x0, dtype=float)
    state = SolverState(x=x0, sigma=config.sigma0,
                        averager=AveragerState(scheme=config.averaging),
                        t=0, oracle=oracle)
    records = []
    converged = False
    while True:
        tic = time.perf_counter()
        f_val = problem.value(state.x)
        g = problem.gradient(state.x)
        grad_norm = float(np.linalg.norm(g))
        f_gap = f_val - f_ref if f_ref is not None else None
        if _stop_met(grad_norm, f_gap, config.grad_norm_tol, config.f_gap_tol):
            converged = True
            break
        if state.t >= config.max_iters:
            break
        state, record = snpe_step(state, config, problem, g=g, f_val=f_val,
                                  x_ref=x_ref, tic=tic)
        records.append(record)
    dist = float(np.linalg.norm(state.x - x_ref)) if x_ref is not None else None
    return RunResult(records=records, x_final=state.x, converged=converged,
                     f_final=f_val, grad_norm_final=grad_norm, dist_final=dist,
                     info={"solver": "snpe", "clip_count": oracle.clip_count})


# ---------------------------------------------------------------------------
# baselines


def power_iteration(h: np.ndarray, iters: int = 500, tol: float = 1e-10):
    """Largest eigenvalue of a symmetric PSD matrix; returns (value, converged)."""
    dim = h.shape[0]
    v = np.ones(dim) / math.sqrt(dim)
    lam = 0.0
    for _ in range(iters):
        hv = h @ v
        nrm = float(np.linalg.norm(hv))
        if nrm == 0.0:
            return 0.0, True
        v = hv / nrm
        lam_new = float(v @ h @ v)
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new, True
        lam = lam_new
    return lam, False


def _baseline_loop(problem, x0, max_iters, grad_norm_tol, f_gap_tol, f_ref, x_ref,
                   stepper, info):
    x = np.array(x0, dtype=float)
    records = []
    t = 0
    converged = False
    while True:
        tic = time.perf_counter()
        f_val = problem.value(x)
        g = problem.gradient(x)
        grad_norm = float(np.linalg.norm(g))
        f_gap = f_val - f_ref if f_ref is not None else None
        if _stop_met(grad_norm, f_gap, grad_norm_tol, f_gap_tol):
            converged = True
            break
        if t >= max_iters:
            break
        x_next, eta, ls_steps, flagged = stepper(x, g, t)
        records.append(IterationRecord(
            t=t, sigma=eta, eta=eta, gamma=1.0, ls_steps=ls_steps,
            backtracked=ls_steps > 1, accept_residual=0.0, accept_rhs=0.0,
            grad_norm=grad_norm, f_value=float(f_val),
            dist_to_ref=float(np.linalg.norm(x - x_ref)) if x_ref is not None else None,
            wall_time_ms=(time.perf_counter() - tic) * 1e3,
            step_norm=float(np.linalg.norm(x_next - x)), flagged=flagged))
        x = x_next
        t += 1
    dist = float(np.linalg.norm(x - x_ref)) if x_ref is not None else None
    return RunResult(records=records, x_final=x, converged=converged, f_final=f_val,
                     grad_norm_final=grad_norm, dist_final=dist, info=info)


def run_stochastic_newton(config: StochasticNewtonConfig, problem, x0,
                          x_ref=None, f_ref=None,
                          oracle: Optional[HessianOracle] = None) -> RunResult:
    """Newton steps on the running averaged Hessian (comparison baseline).

    The averaged matrix is floored at a tiny eigenvalue before the solve so a
    rank-deficient early average never aborts the run; flooring is flagged on
    the affected records.  The step is globalized by Armijo halving on f: an
    early averaged estimate wildly underestimates curvature in undersampled
    directions, which makes the raw step diverge on ill-conditioned problems,
    while near the optimum the full step is accepted and the locally analyzed
    iteration is recovered unchanged.
    """
    if config.f_gap_tol is not None and f_ref is None:
        raise ValueError("f_gap_tol stopping requires a reference value f_ref")
    if oracle is None:
        oracle = make_oracle(config.oracle, problem)
    averager_box = {"state": AveragerState(scheme=config.averaging)}
    info = {"solver": "stochastic_newton", "floored_iters": 0}

    def stepper(x, g, t):
        draw = oracle.draw(x)
        averager_box["state"] = averaging.update(averager_box["state"], draw.h_hat)
        h_avg = averager_box["state"].h_avg
        w, q = np.linalg.eigh(h_avg)
        flagged = bool(w[0] < config.eig_floor)
        if flagged:
            info["floored_iters"] += 1
            w = np.clip(w, config.eig_floor, None)
        d = -(q @ ((q.T @ g) / w))
        f0 = problem.value(x)
        slope = float(g @ d)
        slack = 16.0 * np.finfo(float).eps * max(1.0, abs(f0))
        s = 1.0
        evals = 0
        for _ in range(config.max_ls_steps_per_iter):
            evals += 1
            if problem.value(x + s * d) <= f0 + config.c1 * s * slope + slack:
                break
            s *= 0.5
        return x + s * d, s, evals, flagged

    return _baseline_loop(problem, x0, config.max_iters, config.grad_norm_tol,
                          config.f_gap_tol, f_ref, x_ref, stepper, info)


def run_damped_newton(config: DampedNewtonConfig, problem, x0,
                      x_ref=None, f_ref=None) -> RunResult:
    """Exact-Hessian Newton with Armijo halving on the function value."""
    if config.f_gap_tol is not None and f_ref is None:
        raise ValueError("f_gap_tol stopping requires a reference value f_ref")
    info = {"solver": "damped_newton"}

    def stepper(x, g, t):
        h = problem.hessian(x)
        try:
            factor = scipy.linalg.cho_factor(h, lower=True, check_finite=False)
            d = scipy.linalg.cho_solve(factor, -g, check_finite=False)
        except np.linalg.LinAlgError:
            w, q = np.linalg.eigh(h)
            d = -(q @ ((q.T @ g) / np.clip(w, 1e-12, None)))
        f0 = problem.value(x)
        slope = float(g @ d)
        # rounding-level slack so full steps stay acceptable once f-differences
        # drop below float resolution near the optimum
        slack = 16.0 * np.finfo(float).eps * max(1.0, abs(f0))
        s = 1.0
        evals = 0
        for _ in range(config.max_ls_steps_per_iter):
            evals += 1
            if problem.value(x + s * d) <= f0 + config.c1 * s * slope + slack:
                break
            s *= 0.5
        return x + s * d, s, evals, False

    return _baseline_loop(problem, x0, config.max_iters, config.grad_norm_tol,
                          config.f_gap_tol, f_ref, x_ref, stepper, info)


def run_agd(config: AGDConfig, problem, x0, x_ref=None, f_ref=None) -> RunResult:
    """Constant-momentum accelerated gradient descent for strongly convex f.

    The gradient Lipschitz constant is estimated by power iteration on the
    Hessian at x0; a non-converged estimate is inflated by 2x and flagged.
    """
    if config.f_gap_tol is not None and f_ref is None:
        raise ValueError("f_gap_tol stopping requires a reference value f_ref")
    x0 = np.array(x0, dtype=float)
    l1, pi_ok = power_iteration(problem.hessian(x0), iters=config.power_iters)
    if not pi_ok:
        l1 *= 2.0
    l1 = max(l1, config.mu)
    kappa_hat = l1 / config.mu
    momentum = (math.sqrt(kappa_hat) - 1.0) / (math.sqrt(kappa_hat) + 1.0)
    info = {"solver": "agd", "l1_hat": l1, "power_iteration_converged": pi_ok,
            "momentum": momentum}
    prev = {"x": x0.copy()}

    def stepper(x, g, t):
        y = x + momentum * (x - prev["x"])
        x_next = y - problem.gradient(y) / l1
        prev["x"] = x
        return x_next, 1.0 / l1, 1, not pi_ok

    return _baseline_loop(problem, x0, config.max_iters, config.grad_norm_tol,
                          config.f_gap_tol, f_ref, x_ref, stepper, info)
