"""Small dense symmetric linear algebra.

Everything here works on plain ``numpy`` float64 arrays. Dimensions are tiny
(the normal model has d = 2), so the eigensolver is a cyclic Jacobi iteration
with a fixed sweep order: slow for large d, but bit-reproducible.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

__all__ = [
    "DimensionError",
    "NotPositiveDefinite",
    "EigenNonConvergence",
    "EigenDecomposition",
    "as_symmetric",
    "eigendecompose_sym",
    "principal_sqrt",
    "inverse",
    "inverse_sqrt",
    "matmul",
    "matvec",
]

SYM_TOL = 1e-12
PD_TOL = 1e-12
MAX_SWEEPS = 100


class DimensionError(ValueError):
    pass


class NotPositiveDefinite(ValueError):
    pass


class EigenNonConvergence(RuntimeError):
    pass


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    """Descending."""
    eigenvectors: np.ndarray
    """Columns are the eigenvectors."""


def as_symmetric(a) -> np.ndarray:
    """Validate ``a`` as a finite square symmetric matrix and return a float64 copy."""
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    gap = np.abs(a - a.T)
    if np.any(gap > SYM_TOL * np.maximum(1.0, np.abs(a))):
        raise ValueError(f"matrix is not symmetric (max asymmetry {gap.max():.3e})")
    return a


def _off_norm(a: np.ndarray) -> float:
    return math.sqrt(2.0 * float(np.sum(np.triu(a, 1) ** 2)))


def eigendecompose_sym(a, max_sweeps: int = MAX_SWEEPS) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Pivots are visited row by row, (0,1), (0,2), ..., (d-2,d-1), in every sweep.
    Eigenvalues come back in descending order and each eigenvector column is
    signed so that its largest-magnitude component is positive.
    """
    a = as_symmetric(a)
    d = a.shape[0]
    v = np.eye(d)
    scale = float(np.linalg.norm(a))

    sweeps = 0
    while _off_norm(a) > 1e-15 * scale:
        if sweeps == max_sweeps:
            raise EigenNonConvergence(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
        sweeps += 1
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 1.0 / (2.0 * theta)
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    for j in range(d):
        i = int(np.argmax(np.abs(v[:, j])))
        if v[i, j] < 0.0:
            v[:, j] = -v[:, j]
    return EigenDecomposition(w, v)


def _spectral_map(a, fn, pd_tol: float) -> np.ndarray:
    w, v = eigendecompose_sym(a)
    if w[-1] <= pd_tol:
        raise NotPositiveDefinite(f"smallest eigenvalue {w[-1]:.3e} <= {pd_tol:.1e}")
    out = (v * fn(w)) @ v.T
    return 0.5 * (out + out.T)


def principal_sqrt(a, pd_tol: float = PD_TOL) -> np.ndarray:
    """The unique symmetric positive definite S with S @ S == a."""
    return _spectral_map(a, np.sqrt, pd_tol)


def inverse(a, pd_tol: float = PD_TOL) -> np.ndarray:
    return _spectral_map(a, lambda w: 1.0 / w, pd_tol)


def inverse_sqrt(a, pd_tol: float = PD_TOL) -> np.ndarray:
    """``inverse(principal_sqrt(a))`` in one spectral pass."""
    return _spectral_map(a, lambda w: 1.0 / np.sqrt(w), pd_tol)


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def matvec(a, v) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if a.ndim != 2 or v.ndim != 1 or a.shape[1] != v.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {v.shape}")
    out = np.zeros(a.shape[0])
    for i in range(a.shape[0]):
        acc = 0.0
        for k in range(a.shape[1]):
            acc += a[i, k] * v[k]
        out[i] = acc
    return out
