"""Small dense linear-algebra helpers.

Everything here operates on float64 numpy arrays and is pure.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .errors import SingularSystem

# pivots below this fraction of the largest Gram diagonal count as zero
SINGULAR_RTOL = 1e-12


def kron(a, b) -> np.ndarray:
    """Kronecker product of two vectors; ``out[i * len(b) + j] = a[i] * b[j]``."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    return (a[:, None] * b[None, :]).ravel()


def batch_kron(A, B) -> np.ndarray:
    """Row-wise Kronecker product of two sample matrices (N, p) x (N, q) -> (N, p*q)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    return (A[:, :, None] * B[:, None, :]).reshape(n, -1)


def lstsq(X, Y, ridge: float = 0.0) -> np.ndarray:
    """Ridge least squares via the normal equations.

    Solves ``(X^T X + ridge I) W = X^T Y``. A Cholesky factorization is tried
    first; if it fails (indefinite in floating point) a pivoted LU is used.
    With ``ridge == 0`` a pivot below ``1e-12 * max(diag(X^T X))`` raises
    :class:`SingularSystem`.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    vector_rhs = Y.ndim == 1
    if vector_rhs:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError(f"incompatible shapes {X.shape} and {Y.shape}")

    G = X.T @ X
    rhs = X.T @ Y
    scale = float(np.max(np.abs(np.diag(G)))) if G.size else 0.0
    if ridge > 0:
        G = G + ridge * np.eye(G.shape[0])
    floor = SINGULAR_RTOL * max(scale, np.finfo(float).tiny)

    try:
        c, lower = scipy.linalg.cho_factor(G, lower=False, check_finite=False)
        pivots = np.diag(c) ** 2
        if ridge == 0 and np.min(pivots) < floor:
            raise SingularSystem("normal equations are singular; add ridge")
        W = scipy.linalg.cho_solve((c, lower), rhs, check_finite=False)
    except np.linalg.LinAlgError:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(G, check_finite=False)
        if ridge == 0 and np.min(np.abs(np.diag(lu))) < floor:
            raise SingularSystem("normal equations are singular; add ridge")
        W = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    return W[:, 0] if vector_rhs else W


def sherman_morrison_update(inv, v) -> np.ndarray:
    """Inverse of ``G + v v^T`` given ``inv = G^{-1}`` (G symmetric positive definite)."""
    inv = np.asarray(inv, dtype=float)
    v = np.asarray(v, dtype=float).ravel()
    iv = inv @ v
    denom = 1.0 + v @ iv
    out = inv - np.outer(iv, iv) / denom
    # keep the iterate exactly symmetric
    return 0.5 * (out + out.T)
