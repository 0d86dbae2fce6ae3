"""Small dense linear-algebra helpers shared across the package.

Everything here operates on plain numpy arrays. The 2x2 closed forms exist
because the simulation hot loop calls these thousands of times per second;
they fall back to LAPACK routines for general sizes.
"""

from __future__ import annotations

import math

import numpy as np


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return the symmetric part (m + m.T) / 2."""
    return 0.5 * (m + m.T)


def min_eig_sym(m: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    n = m.shape[0]
    if n == 1:
        return float(m[0, 0])
    if n == 2:
        half_tr = 0.5 * (m[0, 0] + m[1, 1])
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        return float(half_tr - math.sqrt(max(half_tr * half_tr - det, 0.0)))
    return float(np.linalg.eigvalsh(m)[0])


def min_eig_sym_batch(ms: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of each matrix in a (k, p, p) stack."""
    p = ms.shape[-1]
    if p == 1:
        return ms[:, 0, 0].copy()
    if p == 2:
        half_tr = 0.5 * (ms[:, 0, 0] + ms[:, 1, 1])
        det = ms[:, 0, 0] * ms[:, 1, 1] - ms[:, 0, 1] * ms[:, 1, 0]
        return half_tr - np.sqrt(np.maximum(half_tr * half_tr - det, 0.0))
    return np.array([np.linalg.eigvalsh(m)[0] for m in ms])


def inv_pd(m: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix, symmetrized."""
    if m.shape[0] == 2:
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        out = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
        return symmetrize(out)
    return symmetrize(np.linalg.inv(m))


def psd_floor(m: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Clip negative eigenvalues of a symmetric matrix at ``tol``.

    Leaves the input untouched (and avoids an eigendecomposition) when the
    smallest eigenvalue is already above the floor.
    """
    m = symmetrize(m)
    if min_eig_sym(m) >= tol:
        return m
    vals, vecs = np.linalg.eigh(m)
    vals = np.maximum(vals, tol)
    return symmetrize((vecs * vals) @ vecs.T)
