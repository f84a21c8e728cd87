"""Small shared numeric and hashing helpers."""

from __future__ import annotations

import hashlib

import numpy as np


def sym_spectral_norm(m: np.ndarray) -> float:
    """Spectral norm of a symmetric matrix via its eigenvalues."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(m))))


def spectral_norm(m: np.ndarray) -> float:
    """Spectral norm (largest singular value) of a general matrix."""
    return float(np.linalg.norm(np.asarray(m, dtype=float), 2))


def min_eigenvalue(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(np.asarray(m, dtype=float))[0])


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def asymmetry(m: np.ndarray) -> float:
    """Largest absolute entry of m - m^T."""
    m = np.asarray(m, dtype=float)
    return float(np.max(np.abs(m - m.T))) if m.size else 0.0


def freeze(a: np.ndarray) -> np.ndarray:
    """Return a float64 C-contiguous copy marked read-only."""
    out = np.array(a, dtype=float, order="C")
    out.flags.writeable = False
    return out


def stable_u64(name: str) -> int:
    """Platform-independent 64-bit hash of a string (for seed derivation)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
