"""Dense linear algebra kernels for small float64 matrices.

Everything is deterministic: the same input array yields bit-identical output
on one platform/BLAS build.  Decompositions are returned in descending order
and sign-fixed (largest-magnitude entry of each left vector made positive) so
logs and frozen test values are reproducible.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NonPositiveSpectrum, NotSymmetric, RankDeficient, ZeroMatrix

# Relative symmetry / spectrum tolerances used by the checked factorizations.
SYM_TOL = 1e-12
SPD_EIG_FLOOR = 1e-12
PINV_RANK_TOL = 1e-10


class SymEig(NamedTuple):
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # orthonormal columns, column i pairs with eigenvalues[i]


class SingularPair(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    sigma: float


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {M.shape}")
    return M


def opnorm(M) -> float:
    """Spectral norm; 0.0 for an empty matrix."""
    M = _as_matrix(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def frob(M) -> float:
    return float(np.linalg.norm(np.asarray(M, dtype=np.float64)))


def lambda_max(M) -> float:
    """Largest signed eigenvalue of a symmetric matrix; 0.0 for an empty one."""
    M = _as_matrix(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(M)[-1])


def svdvals(M) -> np.ndarray:
    """Singular values, descending; empty array for an empty matrix."""
    M = _as_matrix(M)
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def _fix_signs(U: np.ndarray, V: np.ndarray | None = None) -> None:
    """Flip columns of U (and matching columns of V) in place so that the
    largest-magnitude entry of each U column is positive.  Ties resolve to the
    first maximal index, which is deterministic."""
    for j in range(U.shape[1]):
        col = U[:, j]
        i = int(np.argmax(np.abs(col)))
        if col[i] < 0.0:
            U[:, j] = -col
            if V is not None:
                V[:, j] = -V[:, j]


def sym_eig(M, rel_tol: float = SYM_TOL) -> SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Raises NotSymmetric when ||M - M^T||_F exceeds rel_tol * ||M||_F.
    """
    M = _as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise NotSymmetric(float("inf"), f"matrix of shape {M.shape} is not square")
    base = frob(M)
    asym = frob(M - M.T)
    if asym > rel_tol * base:
        raise NotSymmetric(asym)
    S = 0.5 * (M + M.T)
    w, Q = np.linalg.eigh(S)
    w = w[::-1].copy()
    Q = Q[:, ::-1].copy()
    _fix_signs(Q)
    return SymEig(w, Q)


def svd(M) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD (left, sigmas, right) with M = left @ diag(sigmas) @ right.T.

    Singular values are descending and nonnegative; left columns are
    sign-fixed with the matching right column flipped along.
    """
    M = _as_matrix(M)
    L, s, Vh = np.linalg.svd(M, full_matrices=False)
    R = Vh.T.copy()
    L = L.copy()
    _fix_signs(L, R)
    return L, s, R


def pinv_wide(A) -> np.ndarray:
    """Right pseudoinverse A^T (A A^T)^{-1} of a wide full-row-rank matrix.

    Raises RankDeficient when sigma_min(A) < PINV_RANK_TOL * sigma_max(A).
    """
    A = _as_matrix(A)
    rows, cols = A.shape
    if rows > cols:
        raise ValueError(f"pinv_wide expects rows <= cols, got shape {A.shape}")
    s = svdvals(A)
    if s.size == 0 or s[0] == 0.0 or s[-1] < PINV_RANK_TOL * s[0]:
        raise RankDeficient(0.0 if s.size == 0 else float(s[-1]))
    return np.linalg.solve(A @ A.T, A).T


def _checked_spd_eig(M) -> SymEig:
    eig = sym_eig(M)
    lam_min = float(eig.eigenvalues[-1])
    if lam_min <= SPD_EIG_FLOOR:
        raise NonPositiveSpectrum(lam_min)
    return eig


def spd_log(M) -> np.ndarray:
    """Matrix logarithm of a symmetric positive definite matrix."""
    w, Q = _checked_spd_eig(M)
    L = (Q * np.log(w)) @ Q.T
    return 0.5 * (L + L.T)


def spd_frac_power(M, p: float) -> np.ndarray:
    """M^p for symmetric positive definite M and p in [0, 1].

    p = 0 returns the exact identity; p = 1 reproduces M to roundoff through
    the same eigendecomposition path as every other power.
    """
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"fractional power must lie in [0, 1], got {p}")
    M = _as_matrix(M)
    if p == 0.0:
        return np.eye(M.shape[0])
    w, Q = _checked_spd_eig(M)
    P = (Q * w**p) @ Q.T
    return 0.5 * (P + P.T)


def top_singular_pair(M) -> SingularPair:
    """(u, v, sigma) for the largest singular value; ties take the first index.

    Sign convention: the largest-magnitude entry of u is positive.
    Raises ZeroMatrix for an all-zero matrix.
    """
    M = _as_matrix(M)
    if M.size == 0 or not np.any(M):
        raise ZeroMatrix()
    L, s, R = svd(M)
    return SingularPair(L[:, 0].copy(), R[:, 0].copy(), float(s[0]))


def bottom_singular_pair(M) -> SingularPair:
    """(u, v, sigma) at index min(M.shape), the smallest structural singular
    value.  M must have full row (or column, if tall) rank within tolerance;
    otherwise RankDeficient is raised."""
    M = _as_matrix(M)
    if M.size == 0 or not np.any(M):
        raise ZeroMatrix()
    L, s, R = svd(M)
    k = min(M.shape) - 1
    if s[k] <= SYM_TOL * s[0]:
        raise RankDeficient(float(s[k]))
    return SingularPair(L[:, k].copy(), R[:, k].copy(), float(s[k]))
