"""Shared test utilities: finite differences, toy problems, ensembles."""

import numpy as np


def fd_gradient(f, x, h=1e-6):
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        step = h * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def fd_jacobian(gfun, x, h=1e-6):
    """Central-difference Jacobian of a vector function (Hessian from a gradient)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        step = h * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = step
        cols.append((gfun(x + e) - gfun(x - e)) / (2.0 * step))
    return np.column_stack(cols)


def rel_err(approx, exact):
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    denom = max(1e-12, float(np.max(np.abs(exact))))
    return float(np.max(np.abs(approx - exact))) / denom


class OneDQuartic:
    """f(x) = x^4 / 4 + x^2 / 2 on R^1; strongly convex with mu = 1."""

    dim = 1
    mu = 1.0
    lam = 0.0

    def value(self, x):
        v = float(np.asarray(x).reshape(()))
        return v ** 4 / 4.0 + v ** 2 / 2.0

    def gradient(self, x):
        v = float(np.asarray(x).reshape(()))
        return np.array([v ** 3 + v])

    def hessian(self, x):
        v = float(np.asarray(x).reshape(()))
        return np.array([[3.0 * v ** 2 + 1.0]])


def random_psd(dim, rng, scale=1.0, floor=0.0):
    g = rng.standard_normal((dim, dim))
    return scale * (g @ g.T) / dim + floor * np.eye(dim)
