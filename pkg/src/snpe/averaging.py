"""Running averages of stochastic Hessian draws under general weight sequences.

The averaged estimate after t + 1 draws is

    H_avg_t = (w(t-1) / w(t)) * H_avg_{t-1} + (1 - w(t-1) / w(t)) * H_hat_t,

equivalently  sum_i z_{i,t} H_hat_i  with  z_{i,t} = (w(i) - w(i-1)) / w(t).

Weight arithmetic happens in log space throughout: the log-power weights
(t+1)**log(t+4) grow fast enough that only ratios, never raw weights, should
cross an interface.  Only the current d x d average is stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .util import asymmetry

__all__ = [
    "WeightScheme",
    "AveragerState",
    "WeightSchemeReport",
    "weight_ratio",
    "update",
    "explicit_weights",
    "validate_weight_scheme",
]

_KINDS = ("uniform", "power", "log_power", "latest")


@dataclass(frozen=True)
class WeightScheme:
    """Weight function w with w(-1) = 0.

    uniform:   w(t) = t + 1
    power:     w(t) = (t + 1)**p, p >= 1
    log_power: w(t) = (t + 1)**log_base(t + 4)   (natural log by default)
    latest:    all weight on the newest draw (z_{t,t} = 1); the no-bias
               degenerate limit, used by the exact-Hessian baseline
    """

    kind: str
    p: float | None = None
    log_base: float = math.e

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.kind == "power":
            if self.p is None or self.p < 1:
                raise ValueError(f"power scheme needs p >= 1, got {self.p}")
        if not self.log_base > 1:
            raise ValueError(f"log base must exceed 1, got {self.log_base}")

    def to_json(self) -> dict:
        doc = {"kind": self.kind}
        if self.kind == "power":
            doc["p"] = self.p
        return doc

    @staticmethod
    def from_json(doc: dict) -> "WeightScheme":
        return WeightScheme(kind=doc["kind"], p=doc.get("p"),
                            log_base=float(doc.get("log_base", math.e)))


def log_weight(scheme: WeightScheme, t: float) -> float:
    """ln w(t) for real t > -1; -inf at t = -1 where w vanishes."""
    if scheme.kind == "latest":
        raise ValueError("most-recent weighting has no weight function")
    if t < -1:
        raise ValueError(f"weights are defined for t >= -1, got {t}")
    if t == -1:
        return -math.inf
    if scheme.kind == "uniform":
        return math.log(t + 1.0)
    if scheme.kind == "power":
        return scheme.p * math.log(t + 1.0)
    return math.log(t + 1.0) * math.log(t + 4.0) / math.log(scheme.log_base)


def dlog_weight(scheme: WeightScheme, t: float) -> float:
    """w'(t) / w(t) for real t > -1 (closed form)."""
    if scheme.kind == "latest":
        raise ValueError("most-recent weighting has no weight function")
    if t <= -1:
        raise ValueError(f"need t > -1, got {t}")
    if scheme.kind == "uniform":
        return 1.0 / (t + 1.0)
    if scheme.kind == "power":
        return scheme.p / (t + 1.0)
    return (math.log(t + 4.0) / (t + 1.0) + math.log(t + 1.0) / (t + 4.0)) / math.log(scheme.log_base)


def _curvature_sign(scheme: WeightScheme, t: float) -> float:
    """(ln w)'' + ((ln w)')^2, which has the sign of w''(t) wherever w > 0."""
    u1 = dlog_weight(scheme, t)
    if scheme.kind == "uniform":
        u2 = -1.0 / (t + 1.0) ** 2
    elif scheme.kind == "power":
        u2 = -scheme.p / (t + 1.0) ** 2
    else:
        u2 = (2.0 / ((t + 1.0) * (t + 4.0))
              - math.log(t + 4.0) / (t + 1.0) ** 2
              - math.log(t + 1.0) / (t + 4.0) ** 2) / math.log(scheme.log_base)
    return u2 + u1 * u1


def weight_ratio(scheme: WeightScheme, t: int) -> float:
    """w(t-1) / w(t), evaluated as exp(ln w(t-1) - ln w(t)); 0 at t = 0."""
    if t < 0:
        raise ValueError(f"need t >= 0, got {t}")
    if t == 0 or scheme.kind == "latest":
        return 0.0
    return math.exp(log_weight(scheme, t - 1) - log_weight(scheme, t))


@dataclass(frozen=True)
class AveragerState:
    """Current average plus the index of the last absorbed draw (-1 = empty)."""

    scheme: WeightScheme
    h_avg: np.ndarray | None = None
    t: int = -1


def update(state: AveragerState, h_hat: np.ndarray) -> AveragerState:
    """Absorb one draw; the first update copies it regardless of scheme."""
    h_hat = np.asarray(h_hat, dtype=float)
    if h_hat.ndim != 2 or h_hat.shape[0] != h_hat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h_hat.shape}")
    if asymmetry(h_hat) > 1e-10 * (1.0 + float(np.max(np.abs(h_hat)))):
        raise ValueError("input matrix is asymmetric beyond tolerance")
    t_new = state.t + 1
    if t_new == 0:
        return replace(state, h_avg=h_hat.copy(), t=0)
    if state.h_avg is None or state.h_avg.shape != h_hat.shape:
        raise ValueError("dimension mismatch with running average")
    r = weight_ratio(state.scheme, t_new)
    return replace(state, h_avg=r * state.h_avg + (1.0 - r) * h_hat, t=t_new)


def explicit_weights(scheme: WeightScheme, t: int) -> np.ndarray:
    """z_{i,t} = (w(i) - w(i-1)) / w(t) for i = 0..t; nonnegative, sums to 1."""
    if t < 0:
        raise ValueError(f"need t >= 0, got {t}")
    if scheme.kind == "uniform":
        return np.full(t + 1, 1.0 / (t + 1))
    if scheme.kind == "latest":
        z = np.zeros(t + 1)
        z[-1] = 1.0
        return z
    lw = np.array([log_weight(scheme, i) for i in range(-1, t + 1)])
    e = np.exp(lw - lw[-1])
    return np.diff(e)


@dataclass
class WeightSchemeReport:
    psi_estimate: float
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_weight_scheme(scheme: WeightScheme, horizon: int) -> WeightSchemeReport:
    """Numerically check the weight-function regularity conditions up to horizon.

    Positivity, the vanishing left endpoint, nonnegative slope at -1 (one-sided,
    probed at -1 + 1e-6), convexity on a quarter-integer grid, and a finite
    growth-ratio bound whose max over the horizon is returned as psi_estimate.
    """
    if horizon < 2:
        raise ValueError(f"need horizon >= 2, got {horizon}")
    if scheme.kind == "latest":
        return WeightSchemeReport(
            psi_estimate=math.inf,
            violations=["most-recent weighting has no finite growth bound"])
    violations = []

    if not math.exp(log_weight(scheme, -1)) == 0.0:
        violations.append("w(-1) != 0")
    for t in range(horizon + 1):
        if not math.isfinite(log_weight(scheme, t)):
            violations.append(f"w({t}) is not positive")
            break

    eps = 1e-6
    w_eps = math.exp(log_weight(scheme, -1 + eps))
    if w_eps * dlog_weight(scheme, -1 + eps) < -1e-12:
        violations.append("w'(-1) < 0")

    grid = np.concatenate(([-1 + eps], np.arange(-0.75, horizon + 0.25, 0.25)))
    for t in grid:
        if _curvature_sign(scheme, float(t)) < -1e-9:
            violations.append(f"w''({t}) < 0")
            break

    psi = 0.0
    for t in range(horizon):
        w_ratio = math.exp(log_weight(scheme, t + 1) - log_weight(scheme, t))
        dw_ratio = w_ratio * dlog_weight(scheme, t + 1) / dlog_weight(scheme, t)
        cur = max(w_ratio, dw_ratio)
        if not math.isfinite(cur):
            violations.append(f"growth ratio not finite at t={t}")
            break
        psi = max(psi, cur)

    return WeightSchemeReport(psi_estimate=psi, violations=violations)
