"""Strongly convex objective oracles with exact derivatives.

Every problem exposes ``dim``, a declared strong-convexity constant ``mu``,
and the methods ``value``, ``gradient``, ``hessian`` and (where a
factorization exists) ``sqrt_factor`` returning M with

    hessian(x) == M(x).T @ M(x) + lam * I.

The regularization term ``lam * I`` is deliberately kept out of the factor so
that stochastic Hessian constructions perturb only the data-dependent part.
Instances are immutable after construction and safe to share across
concurrent solver runs; all operations are pure functions of (problem, x).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .util import freeze

__all__ = [
    "LogSumExpProblem",
    "QuadraticProblem",
    "FiniteSumQuadraticProblem",
    "lse_value",
    "lse_gradient",
    "lse_hessian",
    "lse_sqrt_factor",
    "lse_softmax",
    "generate_synthetic_lse",
    "random_finite_sum",
    "problem_to_json",
    "problem_from_json",
]


def _as_vector(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise ValueError(f"expected vector of shape ({d},), got {x.shape}")
    return x


@dataclass(frozen=True)
class LogSumExpProblem:
    """Smoothed max of affine functions plus an l2 ridge.

    f(x) = rho * log(sum_i exp((a_i.x - b_i) / rho)) + (lam / 2) * ||x||^2
    """

    A: np.ndarray
    b: np.ndarray
    rho: float
    lam: float
    seed: int | None = None

    def __post_init__(self):
        A = freeze(np.atleast_2d(self.A))
        b = freeze(np.atleast_1d(self.b))
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ValueError(f"A must be a nonempty matrix, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise ValueError(f"b must have length {A.shape[0]}, got shape {b.shape}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def mu(self) -> float:
        return float(self.lam)

    def value(self, x):
        return lse_value(self, x)

    def gradient(self, x):
        return lse_gradient(self, x)

    def hessian(self, x):
        return lse_hessian(self, x)

    def sqrt_factor(self, x):
        return lse_sqrt_factor(self, x)

    def softmax(self, x):
        return lse_softmax(self, x)


def lse_softmax(problem: LogSumExpProblem, x) -> np.ndarray:
    """Softmax weights of the scaled margins (a_i.x - b_i) / rho."""
    x = _as_vector(x, problem.dim)
    z = (problem.A @ x - problem.b) / problem.rho
    z = z - np.max(z)
    p = np.exp(z)
    return p / p.sum()


def lse_value(problem: LogSumExpProblem, x) -> float:
    """Objective value, computed with the usual max-shift so it never overflows."""
    x = _as_vector(x, problem.dim)
    z = (problem.A @ x - problem.b) / problem.rho
    m = float(np.max(z))
    lse = m + float(np.log(np.sum(np.exp(z - m))))
    return problem.rho * lse + 0.5 * problem.lam * float(x @ x)


def lse_gradient(problem: LogSumExpProblem, x) -> np.ndarray:
    x = _as_vector(x, problem.dim)
    p = lse_softmax(problem, x)
    return problem.A.T @ p + problem.lam * x


def lse_hessian(problem: LogSumExpProblem, x) -> np.ndarray:
    x = _as_vector(x, problem.dim)
    p = lse_softmax(problem, x)
    Ap = problem.A * p[:, None]
    abar = problem.A.T @ p
    h = (problem.A.T @ Ap - np.outer(abar, abar)) / problem.rho
    h = 0.5 * (h + h.T)
    return h + problem.lam * np.eye(problem.dim)


def lse_sqrt_factor(problem: LogSumExpProblem, x) -> np.ndarray:
    """n x d factor M with M.T @ M equal to the data part of the Hessian.

    M = rho^(-1/2) * diag(sqrt(p)) * (A - 1 abar^T) with abar = A^T p.
    The lam * I term is excluded and added deterministically by callers.
    """
    x = _as_vector(x, problem.dim)
    p = lse_softmax(problem, x)
    abar = problem.A.T @ p
    centered = problem.A - abar[None, :]
    return np.sqrt(p)[:, None] * centered / np.sqrt(problem.rho)


def generate_synthetic_lse(n: int, d: int, rho: float, lam: float, seed: int) -> LogSumExpProblem:
    """Random instance: A entries standard normal, b entries uniform on [0, 1]."""
    if n < 1 or d < 1:
        raise ValueError(f"need n, d >= 1, got n={n}, d={d}")
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    b = rng.uniform(0.0, 1.0, size=n)
    return LogSumExpProblem(A=A, b=b, rho=float(rho), lam=float(lam), seed=int(seed))


@dataclass(frozen=True)
class QuadraticProblem:
    """f(x) = 0.5 x.T H x - c.x with H symmetric PSD."""

    H: np.ndarray
    c: np.ndarray | None = None
    mu_declared: float | None = None

    def __post_init__(self):
        H = freeze(np.atleast_2d(self.H))
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"H must be square, got shape {H.shape}")
        if np.max(np.abs(H - H.T)) > 1e-10 * (1.0 + np.max(np.abs(H))):
            raise ValueError("H must be symmetric")
        c = np.zeros(H.shape[0]) if self.c is None else np.atleast_1d(self.c)
        c = freeze(c)
        if c.shape != (H.shape[0],):
            raise ValueError(f"c must have length {H.shape[0]}, got shape {c.shape}")
        eigs = np.linalg.eigvalsh(H)
        if eigs[0] < -1e-10:
            raise ValueError(f"H must be PSD, min eigenvalue {eigs[0]}")
        mu = float(max(eigs[0], 0.0)) if self.mu_declared is None else float(self.mu_declared)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "mu_declared", mu)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def mu(self) -> float:
        return self.mu_declared

    @property
    def lam(self) -> float:
        return 0.0

    def value(self, x) -> float:
        x = _as_vector(x, self.dim)
        return 0.5 * float(x @ self.H @ x) - float(self.c @ x)

    def gradient(self, x) -> np.ndarray:
        x = _as_vector(x, self.dim)
        return self.H @ x - self.c

    def hessian(self, x) -> np.ndarray:
        _as_vector(x, self.dim)
        return self.H.copy()

    def sqrt_factor(self, x) -> np.ndarray:
        _as_vector(x, self.dim)
        w, q = np.linalg.eigh(self.H)
        return (q * np.sqrt(np.clip(w, 0.0, None))).T


@dataclass(frozen=True)
class FiniteSumQuadraticProblem:
    """f(x) = (1/n) sum_i (0.5 x.T H_i x - c_i.x) with each H_i PSD.

    Per-component Hessians are stored explicitly so subsampling has an
    exactly decomposable ground truth.
    """

    hessians: np.ndarray  # (n, d, d)
    linear: np.ndarray | None = None  # (n, d)
    mu_declared: float = 0.0

    def __post_init__(self):
        hs = freeze(np.asarray(self.hessians))
        if hs.ndim != 3 or hs.shape[1] != hs.shape[2] or hs.shape[0] < 1:
            raise ValueError(f"hessians must have shape (n, d, d), got {hs.shape}")
        n, d = hs.shape[0], hs.shape[1]
        lin = np.zeros((n, d)) if self.linear is None else np.asarray(self.linear, dtype=float)
        lin = freeze(lin)
        if lin.shape != (n, d):
            raise ValueError(f"linear terms must have shape ({n}, {d}), got {lin.shape}")
        for i in range(n):
            if np.max(np.abs(hs[i] - hs[i].T)) > 1e-10 * (1.0 + np.max(np.abs(hs[i]))):
                raise ValueError(f"component {i} is not symmetric")
            if np.min(np.linalg.eigvalsh(hs[i])) < -1e-10:
                raise ValueError(f"component {i} is not PSD")
        mean_h = hs.mean(axis=0)
        if np.min(np.linalg.eigvalsh(mean_h)) < self.mu_declared - 1e-10:
            raise ValueError("declared mu exceeds the smallest eigenvalue of the mean Hessian")
        object.__setattr__(self, "hessians", hs)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "_mean_h", freeze(mean_h))
        object.__setattr__(self, "_mean_c", freeze(lin.mean(axis=0)))

    @property
    def n_components(self) -> int:
        return self.hessians.shape[0]

    @property
    def dim(self) -> int:
        return self.hessians.shape[1]

    @property
    def mu(self) -> float:
        return float(self.mu_declared)

    @property
    def lam(self) -> float:
        return 0.0

    def value(self, x) -> float:
        x = _as_vector(x, self.dim)
        return 0.5 * float(x @ self._mean_h @ x) - float(self._mean_c @ x)

    def gradient(self, x) -> np.ndarray:
        x = _as_vector(x, self.dim)
        return self._mean_h @ x - self._mean_c

    def hessian(self, x) -> np.ndarray:
        _as_vector(x, self.dim)
        return self._mean_h.copy()

    def component_hessian(self, i: int, x=None) -> np.ndarray:
        return self.hessians[i]

    def sqrt_factor(self, x):
        raise NotImplementedError("finite-sum quadratic exposes no square-root Hessian factor")


def random_finite_sum(n: int, d: int, seed: int, mu: float = 0.1) -> FiniteSumQuadraticProblem:
    """Random PSD components G_i G_i^T + mu I, handy as subsampling ground truth."""
    rng = np.random.default_rng(seed)
    hs = np.empty((n, d, d))
    for i in range(n):
        g = rng.standard_normal((d, d))
        hs[i] = g @ g.T / d + mu * np.eye(d)
    lin = rng.standard_normal((n, d))
    return FiniteSumQuadraticProblem(hessians=hs, linear=lin, mu_declared=mu)


def problem_to_json(problem) -> dict:
    """JSON document for a problem; synthetic instances keep only the descriptor."""
    if isinstance(problem, LogSumExpProblem):
        doc = {"type": "lse", "n": problem.n, "d": problem.dim,
               "rho": problem.rho, "lambda": problem.lam}
        if problem.seed is not None:
            doc["seed"] = problem.seed
        else:
            doc["A"] = problem.A.tolist()
            doc["b"] = problem.b.tolist()
        return doc
    if isinstance(problem, QuadraticProblem):
        return {"type": "quadratic", "H": problem.H.tolist(), "c": problem.c.tolist()}
    if isinstance(problem, FiniteSumQuadraticProblem):
        return {"type": "finite_sum_quadratic", "hessians": problem.hessians.tolist(),
                "linear": problem.linear.tolist(), "mu": problem.mu_declared}
    raise TypeError(f"cannot serialize problem of type {type(problem).__name__}")


def problem_from_json(doc: dict | str):
    if isinstance(doc, str):
        doc = json.loads(doc)
    kind = doc.get("type")
    if kind == "lse":
        rho = float(doc.get("rho", 0.05))
        lam = float(doc.get("lambda", 0.0))
        if "A" in doc:
            return LogSumExpProblem(A=np.asarray(doc["A"], dtype=float),
                                    b=np.asarray(doc["b"], dtype=float), rho=rho, lam=lam)
        return generate_synthetic_lse(int(doc["n"]), int(doc["d"]), rho, lam, int(doc["seed"]))
    if kind == "quadratic":
        if "H" in doc:
            return QuadraticProblem(H=np.asarray(doc["H"], dtype=float),
                                    c=np.asarray(doc["c"], dtype=float) if "c" in doc else None)
        return QuadraticProblem(H=np.eye(int(doc["dim"])))
    if kind == "finite_sum_quadratic":
        return FiniteSumQuadraticProblem(
            hessians=np.asarray(doc["hessians"], dtype=float),
            linear=np.asarray(doc["linear"], dtype=float) if "linear" in doc else None,
            mu_declared=float(doc.get("mu", 0.0)))
    raise ValueError(f"unknown problem type {kind!r}")
