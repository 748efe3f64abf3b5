"""Dense linear-algebra kernels: SVD image/kernel split and pseudoinverse.

Everything here is pure and operates on immutable float arrays, so the
functions are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative factor deciding numerical rank: a singular value counts only if it
# exceeds rank_tol_factor * max(n, m) * sigma_max.
DEFAULT_RANK_TOL_FACTOR = 1e-12


class NonFiniteError(ValueError):
    """Input contains NaN or Inf entries."""


class RankDeficientError(ValueError):
    """Matrix has fewer independent columns than required."""


@dataclass(frozen=True)
class SvdSplit:
    """Orthonormal split of a tall matrix A into image and complement bases.

    A = u1 @ diag(singular_values) @ v.T, the columns of u1 span the image of
    A, the columns of u2 span its orthogonal complement (the kernel of A.T),
    and [u1 | u2] is orthonormal.
    """

    u1: np.ndarray             # (n, r)
    u2: np.ndarray             # (n, n - r)
    singular_values: np.ndarray  # (r,) nonincreasing, strictly positive
    v: np.ndarray              # (m, r)

    @property
    def rank(self) -> int:
        return int(self.singular_values.size)


def svd_split(a, rank_tol_factor: float = DEFAULT_RANK_TOL_FACTOR) -> SvdSplit:
    """Split a tall matrix (n >= m >= 1) into image/complement orthonormal bases.

    Raises NonFiniteError when `a` has NaN/Inf entries.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    n, m = a.shape
    if not n >= m >= 1:
        raise ValueError(f"expected n >= m >= 1, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise NonFiniteError("matrix contains NaN or Inf entries")
    u, s, vt = np.linalg.svd(a, full_matrices=True)
    if s.size and s[0] > 0.0:
        r = int(np.count_nonzero(s > rank_tol_factor * max(n, m) * s[0]))
    else:
        r = 0
    return SvdSplit(
        u1=np.ascontiguousarray(u[:, :r]),
        u2=np.ascontiguousarray(u[:, r:]),
        singular_values=s[:r].copy(),
        v=np.ascontiguousarray(vt[:r].T),
    )


def pseudo_inverse(a, split: SvdSplit) -> np.ndarray:
    """Moore-Penrose inverse of a full-column-rank tall matrix from its split.

    Raises RankDeficientError when rank < m, in which case the explicit
    solution map is not unique.
    """
    a = np.asarray(a, dtype=float)
    m = a.shape[1]
    if split.rank < m:
        raise RankDeficientError(
            f"rank {split.rank} < {m} columns; pseudo-inverse map is not unique"
        )
    return (split.v / split.singular_values) @ split.u1.T


def kernel_basis(a, rank_tol_factor: float = DEFAULT_RANK_TOL_FACTOR) -> np.ndarray:
    """Orthonormal basis of the kernel {x : a @ x = 0} of an arbitrary matrix."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.eye(a.shape[1] if a.ndim == 2 else 0)
    _, s, vt = np.linalg.svd(a)
    tol = rank_tol_factor * max(a.shape) * (s[0] if s.size else 0.0)
    rank = int(np.count_nonzero(s > max(tol, 0.0)))
    return np.ascontiguousarray(vt[rank:].T)


def affine_dimension(points: np.ndarray, rtol: float = 1e-9) -> int:
    """Dimension of the affine hull of a point set (rows are points)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        return -1
    centered = pts - pts.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))
