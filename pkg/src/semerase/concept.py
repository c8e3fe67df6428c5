"""Stage one: stack annotated token embeddings and extract the concept subspace.

Token records carry their origin (sentence, position, surface text) plus a
kind tag.  Rows tagged ``target`` or ``eot`` are stacked, in input order,
into the concept token matrix; its top-k singular directions define the
semantic subspace used by every later stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DegenerateConcept, DimensionMismatch, EmptySelection, RankOutOfBounds
from .linalg import SubspaceBasis

TOKEN_KINDS = frozenset({"target", "eot", "sot", "other"})

# Default selection for concept-matrix assembly: concept-word tokens plus
# end-of-text positions, which absorb sentence-level semantics.
DEFAULT_SELECTION = frozenset({"target", "eot"})

# Relative floor under which sigma_k no longer defines a usable span.
DEGENERACY_FLOOR = 1e-12


@dataclass(frozen=True)
class TokenRecord:
    """One annotated token embedding."""

    embedding: np.ndarray
    sentence_id: int
    position: int
    text: str
    kind: str

    def __post_init__(self):
        if self.kind not in TOKEN_KINDS:
            raise ValueError(f"kind must be one of {sorted(TOKEN_KINDS)}, got {self.kind!r}")


@dataclass(frozen=True)
class ConceptTokenMatrix:
    """N x d_c stack of selected token embeddings with per-row provenance."""

    matrix: np.ndarray
    provenance: tuple[TokenRecord, ...]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def d_c(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class SemanticSubspace:
    """Rank-k factorization of the concept matrix plus its subspace basis.

    The rank-k semantic matrix is never stored dense; ``semantic_matrix``
    materializes u_k diag(sigma) basis^T on demand, so its rank is exactly
    k by construction.
    """

    k: int
    sigma: np.ndarray  # (k,) top singular values, descending, positive
    u_k: np.ndarray  # (N, k)
    basis: SubspaceBasis  # (d_c, k)
    n_rows: int
    d_c: int

    def semantic_matrix(self) -> np.ndarray:
        return (self.u_k * self.sigma) @ self.basis.vectors.T


def assemble_concept_matrix(records, selection=DEFAULT_SELECTION) -> ConceptTokenMatrix:
    """Stack the embeddings of records whose kind is in ``selection``.

    Rows keep input order and every row's record is preserved as
    provenance.  Raises EmptySelection when nothing matches and
    DimensionMismatch when embeddings disagree on d_c.
    """
    selection = frozenset(selection)
    unknown = selection - TOKEN_KINDS
    if unknown:
        raise EmptySelection(f"unknown kinds in selection: {sorted(unknown)}")
    chosen = [r for r in records if r.kind in selection]
    if not chosen:
        raise EmptySelection(f"no records with kind in {sorted(selection)}")
    d_c = np.asarray(chosen[0].embedding).shape
    if len(d_c) != 1:
        raise DimensionMismatch("token embeddings must be 1-D vectors")
    rows = []
    for r in chosen:
        e = np.asarray(r.embedding, dtype=np.float64)
        if e.shape != d_c:
            raise DimensionMismatch(f"embedding shape {e.shape} != {d_c} for token {r.text!r}")
        rows.append(e)
    matrix = linalg.check_matrix(np.vstack(rows), "concept token matrix")
    return ConceptTokenMatrix(matrix=matrix, provenance=tuple(chosen))


def build_semantic_subspace(m: ConceptTokenMatrix, k: int, center: bool = False) -> SemanticSubspace:
    """Top-k singular factorization of the concept matrix.

    ``center`` subtracts the column mean first (off by default; raw
    embeddings are the normal input).  Raises DegenerateConcept when
    sigma_k <= 1e-12 * sigma_1.
    """
    mat = m.matrix
    if center:
        mat = mat - mat.mean(axis=0)
    r = min(mat.shape)
    if not 1 <= k <= r:
        raise RankOutOfBounds(f"k must be in [1, {r}] for a {mat.shape[0]}x{mat.shape[1]} matrix, got {k}")
    f = linalg.svd(mat)
    if f.sigma[k - 1] <= DEGENERACY_FLOOR * f.sigma[0]:
        raise DegenerateConcept(
            f"sigma_{k} = {f.sigma[k - 1]:.3e} is below {DEGENERACY_FLOOR:g} * sigma_1; subspace ill-defined"
        )
    return SemanticSubspace(
        k=k,
        sigma=f.sigma[:k].copy(),
        u_k=f.u[:, :k].copy(),
        basis=linalg.basis(f, k),
        n_rows=mat.shape[0],
        d_c=mat.shape[1],
    )
