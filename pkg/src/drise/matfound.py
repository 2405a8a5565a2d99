"""Dense symmetric-matrix primitives used by the filter recursions.

Everything here operates on small dense ``numpy`` arrays and is free of side
effects.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import cho_solve, lapack

from .errors import NotPsd, NotSymmetric, SingularMatrix

SYM_RTOL = 1e-10
PSD_RTOL = 1e-9
CLAMP_RTOL = 1e-12
PIVOT_RTOL = 1e-12


def symmetrize(S: np.ndarray) -> np.ndarray:
    return 0.5 * (S + S.T)


def _check_square(S: np.ndarray) -> None:
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")


def _check_symmetric(S: np.ndarray) -> None:
    scale = 1.0 + (np.abs(S).max() if S.size else 0.0)
    if S.size and np.abs(S - S.T).max() > SYM_RTOL * scale:
        raise NotSymmetric(f"asymmetry {np.abs(S - S.T).max():.3e} exceeds tolerance")


def _psd_eigh(S: np.ndarray):
    """Validate ``S`` as symmetric PSD and return its eigendecomposition."""
    S = np.asarray(S, dtype=float)
    _check_square(S)
    _check_symmetric(S)
    w, V = np.linalg.eigh(symmetrize(S))
    radius = np.abs(w).max() if w.size else 0.0
    if w.size and w[0] < -PSD_RTOL * (1.0 + radius):
        raise NotPsd(f"minimum eigenvalue {w[0]:.3e} is negative")
    return w, V


def sym_sqrt(S: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root ``M`` with ``M @ M == S``.

    Eigenvalues below ``1e-12 * trace(S)`` are treated as zero.

    Raises:
        NotSymmetric: if ``S`` is not symmetric within tolerance.
        NotPsd: if ``S`` has a clearly negative eigenvalue.
    """
    w, V = _psd_eigh(S)
    floor = CLAMP_RTOL * max(float(np.trace(S)), 0.0)
    w = np.where(w > floor, w, 0.0)
    return symmetrize((V * np.sqrt(w)) @ V.T)


def sym_pinv_sqrt(S: np.ndarray, rtol: float = 1e-9):
    """Moore-Penrose inverse of the symmetric square root of a PSD matrix.

    Eigen-directions whose eigenvalue is at most ``rtol`` times the largest
    one are treated as the null space.

    Returns:
        ``(W, rank)`` where ``W @ W`` is the pseudo-inverse of ``S`` and
        ``rank`` is the numerical rank used.
    """
    w, V = _psd_eigh(S)
    top = w[-1] if w.size else 0.0
    keep = w > rtol * top if top > 0.0 else np.zeros_like(w, dtype=bool)
    inv_root = np.zeros_like(w)
    inv_root[keep] = 1.0 / np.sqrt(w[keep])
    return symmetrize((V * inv_root) @ V.T), int(keep.sum())


def spd_solve(S: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``S X = B`` for symmetric positive definite ``S`` via Cholesky.

    Raises:
        SingularMatrix: if a Cholesky pivot falls below
            ``1e-12 * trace(S) / dim`` or the factorization breaks down.
    """
    S = np.asarray(S, dtype=float)
    B = np.asarray(B, dtype=float)
    _check_square(S)
    if B.shape[0] != S.shape[0]:
        raise ValueError(f"row mismatch: S is {S.shape}, B is {B.shape}")
    dim = S.shape[0]
    floor = PIVOT_RTOL * np.trace(S) / dim
    try:
        L = np.linalg.cholesky(symmetrize(S))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("Cholesky factorization failed") from exc
    pivots = np.diagonal(L) ** 2
    if not floor > 0.0 or pivots.min() < floor:
        raise SingularMatrix(f"pivot {pivots.min():.3e} below {floor:.3e}")
    return cho_solve((L, True), B, check_finite=False)


def spd_inv(S: np.ndarray) -> np.ndarray:
    return symmetrize(spd_solve(S, np.eye(S.shape[0])))


def is_psd(S: np.ndarray, tol: float = 1e-9) -> bool:
    """True iff ``S`` is symmetric within ``tol`` and has no eigenvalue below
    ``-tol * (1 + spectral radius)``."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        return False
    if S.size == 0:
        return True
    if not np.all(np.isfinite(S)):
        return False
    scale = 1.0 + np.abs(S).max()
    if np.abs(S - S.T).max() > tol * scale:
        return False
    w = np.linalg.eigvalsh(symmetrize(S))
    return bool(w[0] >= -tol * (1.0 + np.abs(w).max()))


def is_psd_stack(S: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """:func:`is_psd` applied to every matrix of a ``(N, d, d)`` stack."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 3 or S.shape[1] != S.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got shape {S.shape}")
    if S.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    if S.shape[1] == 0:
        return np.ones(S.shape[0], dtype=bool)
    finite = np.isfinite(S).all(axis=(1, 2))
    S = np.where(finite[:, None, None], S, 0.0)
    scale = 1.0 + np.abs(S).max(axis=(1, 2))
    sym = np.abs(S - S.transpose(0, 2, 1)).max(axis=(1, 2)) <= tol * scale
    w = np.linalg.eigvalsh(0.5 * (S + S.transpose(0, 2, 1)))
    ok = w[:, 0] >= -tol * (1.0 + np.abs(w).max(axis=1))
    return finite & sym & ok


# Lean kernels for the per-step filter path. They skip the input validation
# of the public functions above; callers guarantee square float arrays.


@lru_cache(maxsize=None)
def _eye(dim: int) -> np.ndarray:
    I = np.eye(dim)
    I.setflags(write=False)
    return I


def chol_inv(S: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via LAPACK ``potrf``/``potrs``.

    Only the lower triangle of ``S`` is read.

    Raises:
        SingularMatrix: under the same pivot rule as :func:`spd_solve`.
    """
    dim = S.shape[0]
    c, info = lapack.dpotrf(S, lower=1, clean=0)
    floor = PIVOT_RTOL * S.trace() / dim
    if info != 0 or not floor > 0.0 or c.diagonal().min() ** 2 < floor:
        raise SingularMatrix("matrix is not numerically positive definite")
    X, _ = lapack.dpotrs(c, _eye(dim), lower=1)
    return 0.5 * (X + X.T)


def psd_fast(S: np.ndarray, tol: float) -> bool:
    """:func:`is_psd` for a symmetric ``S``, short-circuited by a Cholesky
    attempt that succeeds for every positive definite input."""
    if lapack.dpotrf(S, lower=1, clean=0)[1] == 0:
        return True
    return is_psd(S, tol)


def eigh_sym(S: np.ndarray):
    """Eigen-decomposition ``(w, V)`` of a symmetric matrix, ascending ``w``."""
    w, V, info = lapack.dsyevd(S, compute_v=1, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError("eigen-decomposition did not converge")
    return w, V
