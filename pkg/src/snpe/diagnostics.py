"""Trajectory checkers and phase-transition calculators.

The checkers re-verify, on recorded data, the per-iteration guarantees the
solver is supposed to maintain: the acceptance inequality, the distance
contraction, the cumulative line-search budget, and the step-size lower bound
on backtracked iterations.  All checks are pure functions of their inputs.

The calculators evaluate the predicted boundaries between the warm-up,
linear, and superlinear convergence regimes from user-supplied constants.
They never invent constants; use the estimation helpers or measure them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .averaging import WeightScheme, log_weight, validate_weight_scheme
from .solvers import IterationRecord, RunResult, power_iteration

__all__ = [
    "TheoryConstants",
    "PhaseReport",
    "ContractionReport",
    "ScanCapExceeded",
    "check_hpe_condition",
    "check_contraction",
    "contraction_report_from_run",
    "check_ls_budget",
    "check_step_size_lower_bound",
    "transition_points_uniform",
    "transition_points_weighted",
    "contraction_ratio_series",
    "detect_phase_boundaries",
    "max_admissible_nu",
    "averaged_noise_envelope",
    "estimate_m1_proxy",
]


# ---------------------------------------------------------------------------
# per-iteration checks


def check_hpe_condition(x, x_hat, eta, mu, g_hat, alpha):
    """Recompute both sides of the acceptance inequality at (x, x_hat, eta).

    Returns (ok, lhs, rhs) with ok true iff lhs <= rhs * (1 + 1e-12) + 1e-14.
    """
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    g_hat = np.asarray(g_hat, dtype=float)
    gamma = 1.0 + 2.0 * eta * mu
    lhs = float(np.linalg.norm(x_hat - x + eta * g_hat))
    rhs = alpha * math.sqrt(gamma) * float(np.linalg.norm(x_hat - x))
    return lhs <= rhs * (1.0 + 1e-12) + 1e-14, lhs, rhs


@dataclass
class ContractionReport:
    ok: bool
    n_checked: int
    worst_margin: float  # max over t of lhs/rhs; <= 1 + 1e-8 when ok
    failures: list


def check_contraction(dists: Sequence[float], etas: Sequence[float], mu: float) -> ContractionReport:
    """Verify dist_{t+1}^2 * (1 + 2 eta_t mu) <= dist_t^2 * (1 + 1e-8) pointwise.

    ``dists`` has one more entry than ``etas``; an empty ``etas`` is a vacuous
    pass (single-point trajectory).
    """
    dists = [float(v) for v in dists]
    etas = [float(v) for v in etas]
    if len(dists) != len(etas) + 1:
        raise ValueError("need len(dists) == len(etas) + 1")
    failures = []
    worst = 0.0
    for t, eta in enumerate(etas):
        lhs = dists[t + 1] ** 2 * (1.0 + 2.0 * eta * mu)
        rhs = dists[t] ** 2 * (1.0 + 1e-8)
        if rhs > 0:
            worst = max(worst, lhs / rhs)
        if lhs > rhs:
            failures.append(t)
    return ContractionReport(ok=not failures, n_checked=len(etas),
                             worst_margin=worst, failures=failures)


def contraction_report_from_run(result: RunResult, mu: float) -> ContractionReport:
    if result.dist_final is None or any(r.dist_to_ref is None for r in result.records):
        raise ValueError("run was recorded without a reference point")
    dists = [r.dist_to_ref for r in result.records] + [result.dist_final]
    etas = [r.eta for r in result.records]
    return check_contraction(dists, etas, mu)


def check_ls_budget(ls_steps: Sequence[int], etas: Sequence[float],
                    sigma0: float, beta: float):
    """Cumulative candidate count against 2t - 1 + log_{1/beta}(sigma0 / eta_{t-1}).

    Checked at every prefix length; returns (ok, worst_excess).
    """
    if len(ls_steps) != len(etas):
        raise ValueError("ls_steps and etas must have equal length")
    log_inv_beta = -math.log(beta)
    total = 0
    worst = -math.inf
    ok = True
    for t0, (ls, eta) in enumerate(zip(ls_steps, etas)):
        total += ls
        t = t0 + 1
        bound = 2 * t - 1 + math.log(sigma0 / eta) / log_inv_beta
        excess = total - bound
        worst = max(worst, excess)
        if excess > 1e-9:
            ok = False
    return ok, worst


def check_step_size_lower_bound(record: IterationRecord, alpha: float, beta: float,
                                mu: float, problem=None, solver_kind: str = "direct") -> bool:
    """Accepted step size vs the bound recomputed from the last rejected candidate.

    Vacuously true on iterations that did not backtrack.  With ``problem``
    given, the linearization error is recomputed from the stored snapshots
    (x, x_tilde, h_avg); otherwise the scalars recorded at run time are used.
    The inexact-solve variant weakens both bounds by a factor of 2 and the
    trial-point ratio from 1/beta to 3/beta.
    """
    if not record.backtracked:
        return True
    if record.rejected_x_norm is None or record.rejected_lin_err is None:
        raise ValueError("backtracked record lacks rejected-candidate data")
    if problem is not None:
        if record.x is None or record.x_tilde is None or record.h_avg is None:
            raise ValueError("missing snapshot: rerun with capture_snapshots enabled")
        diff = record.x_tilde - record.x
        x_norm = float(np.linalg.norm(diff))
        lin_err = float(np.linalg.norm(
            problem.gradient(record.x_tilde) - problem.gradient(record.x)
            - record.h_avg @ diff))
    else:
        x_norm = record.rejected_x_norm
        lin_err = record.rejected_lin_err
    if lin_err == 0.0:
        return False  # a zero linearization error cannot have been rejected
    if solver_kind == "direct":
        b1 = alpha * beta * x_norm / lin_err
        b2 = 2.0 * alpha ** 2 * beta * mu * x_norm ** 2 / lin_err ** 2
        ratio_cap = 1.0 / beta
    else:
        b1 = alpha * beta * x_norm / (2.0 * lin_err)
        b2 = alpha ** 2 * beta * mu * x_norm ** 2 / (2.0 * lin_err ** 2)
        ratio_cap = 3.0 / beta
    if record.eta < max(b1, b2) * (1.0 - 1e-8):
        return False
    if x_norm > ratio_cap * record.step_norm * (1.0 + 1e-8):
        return False
    return True


# ---------------------------------------------------------------------------
# phase-transition calculators


@dataclass(frozen=True)
class TheoryConstants:
    """Problem- and run-level constants feeding the phase calculators.

    upsilon is the relative Hessian noise level (absolute level / mu); nu is
    the locality parameter of the superlinear analysis; D the distance of the
    start point to the optimum.
    """

    mu: float
    M1: float
    L2: float
    upsilon: float
    delta: float
    nu: float
    D: float
    alpha: float
    beta: float
    sigma0: float
    d: int

    def __post_init__(self):
        for name in ("mu", "M1", "L2", "upsilon", "D", "sigma0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.d / self.delta < math.e:
            raise ValueError("need d / delta >= e")
        if not 0 < self.nu <= 1:
            raise ValueError("nu must lie in (0, 1]")
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ValueError("alpha and beta must lie in (0, 1)")
        if self.d < 1:
            raise ValueError("d must be a positive integer")

    @property
    def kappa(self) -> float:
        return self.M1 / self.mu

    @staticmethod
    def from_json(doc: dict) -> "TheoryConstants":
        return TheoryConstants(
            mu=float(doc["mu"]), M1=float(doc["M1"]), L2=float(doc["L2"]),
            upsilon=float(doc["upsilon"]), delta=float(doc["delta"]),
            nu=float(doc["nu"]), D=float(doc["D"]), alpha=float(doc["alpha"]),
            beta=float(doc["beta"]), sigma0=float(doc["sigma0"]), d=int(doc["d"]))


@dataclass
class PhaseReport:
    kind: str
    T1: Optional[float] = None
    I: Optional[float] = None
    T2: Optional[float] = None
    T3: Optional[float] = None
    U1: Optional[float] = None
    J: Optional[float] = None
    U2: Optional[float] = None
    empirical_phase_boundaries: Optional[list] = None


class ScanCapExceeded(RuntimeError):
    def __init__(self, message, partial: PhaseReport):
        super().__init__(message)
        self.partial = partial


def _warmup_floor(c: TheoryConstants) -> float:
    """Iterations until the growing trial step size clears alpha beta / (3 M1)."""
    return math.log(c.alpha * c.beta / (3.0 * c.M1 * c.sigma0)) / math.log(1.0 / c.beta)


def transition_points_uniform(c: TheoryConstants) -> PhaseReport:
    """Boundaries of the four convergence regimes under uniform averaging.

    T3 is the root of 64 (T+1) log(d (T+1) / delta) = 9 kappa^2 I^2 / upsilon^2,
    found by bisection on [0, 1e12]; the left side is increasing there.
    """
    kappa = c.kappa
    t1 = max(
        256.0 * (c.upsilon / kappa) ** 2 * math.log(8.0 * c.d * c.upsilon / kappa),
        4.0 * math.log(c.d / c.delta),
        _warmup_floor(c),
    )
    t1 = max(t1, 0.0)
    big_i = t1 + 2.0 * (1.0 + 3.0 * kappa / (2.0 * c.alpha * c.beta)) \
        * math.log(c.L2 * c.D / (c.nu * c.mu))
    big_i = max(big_i, 0.0)
    t2 = max(
        256.0 * (c.upsilon / c.nu) ** 2 * math.log(8.0 * c.d * c.upsilon / (c.delta * c.nu)),
        kappa * big_i / c.nu - 1.0,
        0.0,
    )

    rhs = 9.0 * kappa ** 2 * big_i ** 2 / c.upsilon ** 2

    def lhs(t):
        return 64.0 * (t + 1.0) * math.log(c.d * (t + 1.0) / c.delta)

    lo, hi = 0.0, 1e12
    if lhs(lo) >= rhs:
        t3 = 0.0
    elif lhs(hi) < rhs:
        raise ValueError("T3 root exceeds the bisection bracket [0, 1e12]")
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if lhs(mid) < rhs:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * max(1.0, hi):
                break
        t3 = 0.5 * (lo + hi)

    return PhaseReport(kind="uniform", T1=t1, I=big_i, T2=t2, T3=t3)


def _log_weight_vec(scheme: WeightScheme, t: np.ndarray) -> np.ndarray:
    if scheme.kind == "uniform":
        return np.log(t + 1.0)
    if scheme.kind == "power":
        return scheme.p * np.log(t + 1.0)
    return np.log(t + 1.0) * np.log(t + 4.0) / math.log(scheme.log_base)


def _dlog_weight_vec(scheme: WeightScheme, t: np.ndarray) -> np.ndarray:
    if scheme.kind == "uniform":
        return 1.0 / (t + 1.0)
    if scheme.kind == "power":
        return scheme.p / (t + 1.0)
    return (np.log(t + 4.0) / (t + 1.0) + np.log(t + 1.0) / (t + 4.0)) / math.log(scheme.log_base)


_SCAN_CAP = 10_000_000
_SCAN_CHUNK = 65_536
_FALSE_WINDOW = 4096


def _scan_sup(cond_vec, start: int, partial: PhaseReport):
    """Largest integer t >= start satisfying cond, or None if none found.

    The scanned predicates here eventually fail forever, so the scan stops
    after a long consecutive run of failures (or errors out at the cap).
    """
    last_true = None
    consecutive_false = 0
    t = start
    while t < _SCAN_CAP:
        ts = np.arange(t, min(t + _SCAN_CHUNK, _SCAN_CAP), dtype=float)
        hits = cond_vec(ts)
        idx = np.flatnonzero(hits)
        if idx.size:
            last_true = int(ts[idx[-1]])
            tail_false = len(ts) - 1 - int(idx[-1])
            consecutive_false = tail_false
        else:
            consecutive_false += len(ts)
        if consecutive_false >= _FALSE_WINDOW:
            return last_true
        t += _SCAN_CHUNK
    raise ScanCapExceeded(f"forward scan exceeded {_SCAN_CAP} steps", partial)


def transition_points_weighted(c: TheoryConstants, scheme: WeightScheme) -> PhaseReport:
    """Regime boundaries for a general weight scheme, by forward scan.

    The suprema are evaluated with the log-space weight functions; the scheme
    must pass its regularity validation first.
    """
    report = validate_weight_scheme(scheme, horizon=128)
    if not report.ok:
        raise ValueError(f"weight scheme fails validation: {report.violations}")
    kappa = c.kappa
    partial = PhaseReport(kind="weighted")

    def envelope(ts):
        return np.log(c.d * (ts + 1.0) / c.delta) * _dlog_weight_vec(scheme, ts)

    c1 = min(1.0, kappa / (8.0 * c.upsilon)) ** 2
    start = max(0, math.ceil(_warmup_floor(c)))
    hit = _scan_sup(lambda ts: envelope(ts) >= c1, start, partial)
    u1 = float(hit + 1) if hit is not None else float(start)
    partial.U1 = u1

    c2 = min(1.0, 1.0 / (8.0 * c.upsilon)) ** 2
    hit = _scan_sup(lambda ts: envelope(ts) >= c2, 0, partial)
    j_prime = float(hit + 1) if hit is not None else 0.0

    j = max(u1 + 2.0 * (1.0 + 2.0 * kappa / (c.alpha * c.beta))
            * math.log(c.L2 * c.D / (c.nu * c.mu)), j_prime)
    partial.J = j

    bound = log_weight(scheme, j) + math.log(kappa / c.nu)
    t = 0
    u2 = 0
    while t < _SCAN_CAP:
        ts = np.arange(t, min(t + _SCAN_CHUNK, _SCAN_CAP), dtype=float)
        over = np.flatnonzero(_log_weight_vec(scheme, ts) > bound)
        if over.size:
            u2 = int(ts[over[0]]) - 1
            break
        t += _SCAN_CHUNK
    else:
        raise ScanCapExceeded(f"weight scan exceeded {_SCAN_CAP} steps", partial)

    return PhaseReport(kind="weighted", U1=u1, J=j, U2=float(max(u2, 0)))


# ---------------------------------------------------------------------------
# empirical reporting helpers


def contraction_ratio_series(dists: Sequence[float]) -> np.ndarray:
    """Successive distance ratios, truncated at the first zero denominator."""
    d = np.asarray([float(v) for v in dists])
    if d.size < 2:
        return np.empty(0)
    out = []
    for t in range(d.size - 1):
        if d[t] <= 0.0:
            break
        out.append(d[t + 1] / d[t])
    return np.asarray(out)


def detect_phase_boundaries(ratios: Sequence[float], window: int = 5) -> list:
    """Heuristic change-point on median-filtered log contraction ratios.

    Reporting only; returns the index with the strongest before/after drop in
    the filtered series, or an empty list when the series is too short.
    """
    r = np.asarray([v for v in ratios if v > 0 and math.isfinite(v)])
    if r.size < 2 * window:
        return []
    logs = np.log(r)
    half = window // 2
    filt = np.array([np.median(logs[max(0, i - half):i + half + 1])
                     for i in range(logs.size)])
    best_k, best_drop = None, 0.0
    for k in range(window, logs.size - window + 1):
        drop = float(np.mean(filt[:k]) - np.mean(filt[k:]))
        if drop > best_drop:
            best_k, best_drop = k, drop
    return [best_k] if best_k is not None else []


def max_admissible_nu(alpha: float, beta: float) -> float:
    """Largest locality parameter compatible with the superlinear analysis."""
    term = (5.0 / (2.0 * alpha * beta * math.sqrt((1.0 - alpha ** 2) * beta))
            + 25.0 / (alpha * math.sqrt(2.0 * beta)))
    return 1.0 / term


def averaged_noise_envelope(upsilon_e: float, d: int, delta: float, t: int) -> float:
    """High-probability bound on the uniformly averaged noise norm at step t."""
    return 8.0 * upsilon_e * math.sqrt(math.log(d * (t + 1.0) / delta) / (t + 1.0))


def estimate_m1_proxy(problem, x0) -> float:
    """Power-iteration estimate of the top Hessian eigenvalue at x0."""
    lam, ok = power_iteration(problem.hessian(np.asarray(x0, dtype=float)))
    return lam * (2.0 if not ok else 1.0)
