"""Dense linear-algebra kernel: SVD, rank-k truncation, bases, projections.

All other modules build on the operations here.  Factorizations use a
deterministic sign convention so identical inputs give bit-identical
outputs: in every right singular vector the entry of largest absolute
value is made non-negative (ties broken by lowest index), and the
matching left singular vector is flipped with it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput, RankOutOfBounds, ZeroVector

__all__ = [
    "SvdFactors",
    "SubspaceBasis",
    "svd",
    "truncate_reconstruct",
    "basis",
    "project",
    "project_complement",
    "residual_energy",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def check_matrix(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate a 2-D real matrix: at least 1x1, all entries finite."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be 2-D with at least one row and column, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteInput(f"{name} contains NaN or Inf entries")
    return m


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD of a rows x cols matrix: u (rows x r), sigma (r,), v (cols x r)."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal columns spanning a k-dimensional subspace of R^dim."""

    vectors: np.ndarray  # (dim, k)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    def projector(self) -> np.ndarray:
        """Explicit dim x dim projector matrix B B^T (diagnostics only)."""
        return self.vectors @ self.vectors.T


def _fix_signs(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # np.argmax returns the first occurrence of the maximum, which gives
    # the required lowest-index tie break.
    idx = np.argmax(np.abs(v), axis=0)
    pivot = v[idx, np.arange(v.shape[1])]
    flip = pivot < 0.0
    u = u.copy()
    v = v.copy()
    u[:, flip] *= -1.0
    v[:, flip] *= -1.0
    return u, v


def svd(m: np.ndarray) -> SvdFactors:
    """Thin SVD with the deterministic sign convention.

    Raises NonFiniteInput if any entry is NaN/Inf.  Singular values come
    back non-increasing; u and v have orthonormal columns.
    """
    m = check_matrix(m)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    u, v = _fix_signs(u, vh.T)
    return SvdFactors(u=_freeze(u), sigma=_freeze(s.copy()), v=_freeze(v))


def _check_rank(k: int, r: int) -> None:
    if not 1 <= k <= r:
        raise RankOutOfBounds(f"k must be in [1, {r}], got {k}")


def truncate_reconstruct(f: SvdFactors, k: int) -> np.ndarray:
    """Rank-k reconstruction sum_{i<=k} sigma_i u_i v_i^T (Eckart-Young optimal)."""
    _check_rank(k, f.rank)
    return (f.u[:, :k] * f.sigma[:k]) @ f.v[:, :k].T


def basis(f: SvdFactors, k: int) -> SubspaceBasis:
    """Top-k right singular vectors as an orthonormal basis of the row space."""
    _check_rank(k, f.rank)
    return SubspaceBasis(vectors=_freeze(f.v[:, :k].copy()))


def _check_vector(x: np.ndarray, b: SubspaceBasis) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != b.dim:
        raise DimensionMismatch(f"vector length {x.shape} does not match basis dim {b.dim}")
    return x


def project(x: np.ndarray, b: SubspaceBasis) -> np.ndarray:
    """Orthogonal projection of x onto span(B): x B B^T for row vectors."""
    x = _check_vector(x, b)
    return b.vectors @ (b.vectors.T @ x)


def project_complement(x: np.ndarray, b: SubspaceBasis) -> np.ndarray:
    """x minus its projection onto span(B); orthogonal to every basis column."""
    x = _check_vector(x, b)
    return x - b.vectors @ (b.vectors.T @ x)


def residual_energy(x: np.ndarray, b: SubspaceBasis) -> float:
    """Fraction of squared norm of x that lies inside span(B), in [0, 1]."""
    x = _check_vector(x, b)
    total = float(x @ x)
    if not total > 0.0:
        raise ZeroVector("residual_energy requires a nonzero vector")
    coords = b.vectors.T @ x
    frac = float(coords @ coords) / total
    return min(max(frac, 0.0), 1.0)
