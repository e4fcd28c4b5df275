"""Small numerical linear algebra helpers shared across the package.

Rank decisions everywhere use the same convention: a singular value counts
toward the rank iff it exceeds ``tol`` times the largest singular value.
Vectorization is column-major throughout, so that vec(A X B) = (B^T kron A) vec(X).
"""

from __future__ import annotations

import numpy as np

DEFAULT_RANK_TOL = 1e-9


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce to a float 2-D array, rejecting anything that is not one."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`vec` for a target shape."""
    return np.asarray(v).reshape(shape, order="F")


def symmetrize(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2.0


def spectral_radius(m: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(m)))) if m.size else 0.0


def singular_values(m: np.ndarray) -> np.ndarray:
    if m.size == 0:
        return np.zeros(0)
    return np.linalg.svd(m, compute_uv=False)


def matrix_rank(m: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> int:
    """Numerical rank with a relative singular value threshold."""
    s = singular_values(m)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def nullspace(m: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the (right) null space, columns spanning it."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    _, s, vh = np.linalg.svd(m, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(s > tol * s[0]))
    return vh[rank:].T.conj()


def orthonormal_range(m: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column space, sign-normalized per column."""
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((m.shape[0], 0))
    rank = int(np.sum(s > tol * s[0]))
    basis = u[:, :rank]
    # deterministic sign: largest-magnitude entry of each column positive
    for j in range(basis.shape[1]):
        k = int(np.argmax(np.abs(basis[:, j])))
        if basis[k, j] < 0:
            basis[:, j] = -basis[:, j]
    return basis


def is_psd(m: np.ndarray, tol: float = 1e-10) -> bool:
    """Positive semidefiniteness up to a scale-relative eigenvalue tolerance."""
    m = symmetrize(np.asarray(m, dtype=float))
    w = np.linalg.eigvalsh(m)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 0.0)
    return bool(w.size == 0 or w.min() >= -tol * scale)


def psd_factor(m: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Factor S with S S^T = m for a PSD matrix, clamping tiny negative modes."""
    m = symmetrize(np.asarray(m, dtype=float))
    w, v = np.linalg.eigh(m)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 0.0)
    if w.size and w.min() < -tol * scale:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})")
    return v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
