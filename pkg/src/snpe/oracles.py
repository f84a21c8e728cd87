"""Stochastic PSD Hessian estimates: subsampling, Gaussian sketching, additive noise.

All draws are unbiased for the exact Hessian (up to the reported clipping
bias of the additive-noise mode) and positive semi-definite by construction.
An oracle instance owns its RNG stream and is not shareable across threads;
distinct instances with distinct seeds may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import FiniteSumQuadraticProblem, LogSumExpProblem, lse_softmax
from .util import sym_spectral_norm

__all__ = [
    "OracleConfig",
    "StochasticHessianDraw",
    "HessianOracle",
    "make_oracle",
    "draw_subsampled",
    "draw_sketched",
    "draw_additive_noise",
    "calibrate_noise_scale",
    "estimate_noise_level",
]

_MODES = ("exact", "subsample", "sketch", "additive_noise")


class UnsupportedOracleError(TypeError):
    """The problem lacks the decomposition the requested mode needs."""


@dataclass(frozen=True)
class OracleConfig:
    mode: str
    s: int | None = None
    upsilon_e: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.mode in ("subsample", "sketch"):
            if self.s is None or self.s < 1:
                raise ValueError(f"mode {self.mode!r} needs a sample size s >= 1")
        if self.mode == "additive_noise":
            if self.upsilon_e is None or not self.upsilon_e > 0:
                raise ValueError("additive_noise needs upsilon_e > 0")

    def to_json(self) -> dict:
        doc = {"mode": self.mode, "seed": self.seed}
        if self.s is not None:
            doc["s"] = self.s
        if self.upsilon_e is not None:
            doc["upsilon_e"] = self.upsilon_e
        return doc

    @staticmethod
    def from_json(doc: dict) -> "OracleConfig":
        return OracleConfig(mode=doc["mode"], s=doc.get("s"),
                            upsilon_e=doc.get("upsilon_e"), seed=int(doc.get("seed", 0)))


@dataclass
class StochasticHessianDraw:
    h_hat: np.ndarray
    mode: str
    index: int
    clipped: bool = False


def draw_subsampled(problem, x, s: int, rng: np.random.Generator) -> StochasticHessianDraw:
    """Unbiased PSD estimate from a sampled subset of the Hessian decomposition.

    Finite sums are sampled uniformly without replacement.  Log-sum-exp has no
    finite-sum structure, so indices are drawn i.i.d. from the softmax weights
    (with replacement, which keeps the estimate unbiased for the
    covariance-form Hessian) and the ridge term is added deterministically.
    """
    if s < 1:
        raise ValueError(f"need s >= 1, got {s}")
    if isinstance(problem, FiniteSumQuadraticProblem):
        n = problem.n_components
        k = min(s, n)
        # sorted so a full sample reproduces the exact Hessian bit for bit
        idx = np.sort(rng.choice(n, size=k, replace=False))
        h = problem.hessians[idx].mean(axis=0)
        return StochasticHessianDraw(h_hat=h, mode="subsample", index=-1)
    if isinstance(problem, LogSumExpProblem):
        p = lse_softmax(problem, x)
        abar = problem.A.T @ p
        idx = rng.choice(problem.n, size=s, replace=True, p=p)
        c = problem.A[idx] - abar[None, :]
        h = c.T @ c / (s * problem.rho) + problem.lam * np.eye(problem.dim)
        return StochasticHessianDraw(h_hat=0.5 * (h + h.T), mode="subsample", index=-1)
    raise UnsupportedOracleError(
        f"{type(problem).__name__} exposes no sampling decomposition for subsampled draws")


def draw_sketched(problem, x, s: int, rng: np.random.Generator,
                  sketch: np.ndarray | None = None) -> StochasticHessianDraw:
    """Gaussian-sketched estimate M^T S^T S M + lam I with E[S^T S] = I.

    S has i.i.d. Normal(0, 1/s) entries; pass ``sketch`` to substitute an
    explicit matrix (e.g. the identity, which reproduces the exact Hessian).
    """
    if s < 1:
        raise ValueError(f"need s >= 1, got {s}")
    try:
        m = problem.sqrt_factor(x)
    except NotImplementedError as exc:
        raise UnsupportedOracleError(
            f"{type(problem).__name__} exposes no square-root factor for sketching") from exc
    n = m.shape[0]
    if sketch is None:
        sketch = rng.normal(0.0, 1.0 / np.sqrt(s), size=(s, n))
    sm = sketch @ m
    h = sm.T @ sm + problem.lam * np.eye(problem.dim)
    return StochasticHessianDraw(h_hat=0.5 * (h + h.T), mode="sketch", index=-1)


def calibrate_noise_scale(dim: int, upsilon_e: float, rng: np.random.Generator,
                          draws: int = 2000) -> float:
    """Scale c so that E||c (G + G^T)/2|| matches upsilon_e empirically."""
    total = 0.0
    for _ in range(draws):
        g = rng.standard_normal((dim, dim))
        total += sym_spectral_norm(0.5 * (g + g.T))
    return upsilon_e * draws / total


def draw_additive_noise(problem, x, upsilon_e: float, rng: np.random.Generator,
                        scale: float | None = None) -> StochasticHessianDraw:
    """Exact Hessian plus a symmetric Gaussian perturbation of calibrated size.

    Eigenvalues of the perturbed matrix are clipped at zero so every draw is
    PSD; clipping introduces a small bias, which is why the event is flagged
    on the draw rather than hidden.  Recalibrates on every call unless a
    precomputed ``scale`` is supplied (the oracle class caches it).
    """
    if upsilon_e is not None and upsilon_e <= 0 and scale is None:
        raise ValueError("upsilon_e must be positive")
    h = problem.hessian(x)
    d = h.shape[0]
    if scale is None:
        scale = calibrate_noise_scale(d, upsilon_e, rng)
    g = rng.standard_normal((d, d))
    e = scale * 0.5 * (g + g.T)
    h_hat = h + e
    w, q = np.linalg.eigh(h_hat)
    clipped = bool(w[0] < 0.0)
    if clipped:
        w = np.clip(w, 0.0, None)
        h_hat = (q * w) @ q.T
        h_hat = 0.5 * (h_hat + h_hat.T)
    return StochasticHessianDraw(h_hat=h_hat, mode="additive_noise", index=-1, clipped=clipped)


class HessianOracle:
    """Stateful wrapper: fixed mode, owned RNG stream, draw counter."""

    def __init__(self, config: OracleConfig, problem, seed_sequence=None):
        self.config = config
        self.problem = problem
        if seed_sequence is None:
            seed_sequence = np.random.SeedSequence(config.seed)
        self.rng = np.random.default_rng(seed_sequence)
        self.n_draws = 0
        self.clip_count = 0
        self._noise_scale = None
        if config.mode == "additive_noise":
            # dedicated calibration stream so draw sequences stay aligned
            calib_rng = np.random.default_rng(np.random.SeedSequence(
                entropy=config.seed, spawn_key=(0xCA11B,)))
            self._noise_scale = calibrate_noise_scale(problem.dim, config.upsilon_e, calib_rng)

    @property
    def noise_scale(self):
        return self._noise_scale

    def draw(self, x) -> StochasticHessianDraw:
        cfg = self.config
        if cfg.mode == "exact":
            out = StochasticHessianDraw(h_hat=self.problem.hessian(x), mode="exact", index=-1)
        elif cfg.mode == "subsample":
            out = draw_subsampled(self.problem, x, cfg.s, self.rng)
        elif cfg.mode == "sketch":
            out = draw_sketched(self.problem, x, cfg.s, self.rng)
        else:
            out = draw_additive_noise(self.problem, x, cfg.upsilon_e, self.rng,
                                      scale=self._noise_scale)
        out.index = self.n_draws
        self.n_draws += 1
        self.clip_count += int(out.clipped)
        return out


def make_oracle(config: OracleConfig, problem, seed_sequence=None) -> HessianOracle:
    return HessianOracle(config, problem, seed_sequence=seed_sequence)


def estimate_noise_level(oracle: HessianOracle, problem, x, draws: int) -> float:
    """Monte Carlo mean of ||H_hat - hessian(x)|| over the given number of draws."""
    if draws < 1:
        raise ValueError(f"need draws >= 1, got {draws}")
    h = problem.hessian(x)
    total = 0.0
    for _ in range(draws):
        total += sym_spectral_norm(oracle.draw(x).h_hat - h)
    return total / draws
