"""Synthetic planted-spectrum fixtures for tests, self-checks and demos.

All generators are deterministic in the seed.  The planted construction
draws orthonormal factors from QR of Gaussian matrices and assembles
U diag(spectrum) V^T, so the singular values (and every gap) are known
exactly up to floating-point roundoff.

The default concept fixture keeps the top-k spectrum far above both the
tail and the norm of a typical unit-scale condition token: suppression
can then push tokens essentially flat onto the complement, which the
suite's residual-energy thresholds rely on.
"""

from __future__ import annotations

import numpy as np

from .concept import ConceptTokenMatrix, SemanticSubspace, TokenRecord, assemble_concept_matrix, build_semantic_subspace
from .suppress import ConditionTokens


def planted_spectrum(k: int = 5, tail: int = 10, top: float = 50.0, step: float = 4.0, tail_scale: float = 3.0) -> np.ndarray:
    """Descending spectrum: k strong leading values, then a decaying tail."""
    lead = top - step * np.arange(k)
    decay = tail_scale * 0.85 ** np.arange(tail)
    spectrum = np.concatenate([lead, decay])
    if np.any(np.diff(spectrum) >= 0.0):
        raise ValueError("planted spectrum must be strictly decreasing; adjust parameters")
    return spectrum


def random_orthonormal(n: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """n x r matrix with orthonormal columns, column signs fixed for determinism."""
    if r > n:
        raise ValueError(f"cannot fit {r} orthonormal columns in dimension {n}")
    q, rr = np.linalg.qr(rng.standard_normal((n, r)))
    # Sign-normalize against QR's sign ambiguity.
    return q * np.sign(np.diag(rr))


def make_planted_matrix(n_rows: int, n_cols: int, spectrum: np.ndarray, seed: int = 42) -> np.ndarray:
    """Matrix with exactly the given singular values (descending, positive)."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    r = spectrum.shape[0]
    rng = np.random.default_rng(seed)
    u = random_orthonormal(n_rows, r, rng)
    v = random_orthonormal(n_cols, r, rng)
    return (u * spectrum) @ v.T


def concept_records(n_rows: int = 200, d_c: int = 32, k: int = 5, seed: int = 42) -> list[TokenRecord]:
    """Annotated token records whose stacked embeddings carry a planted spectrum."""
    matrix = make_planted_matrix(n_rows, d_c, planted_spectrum(k=k), seed=seed)
    records = []
    for i in range(n_rows):
        records.append(
            TokenRecord(
                embedding=matrix[i],
                sentence_id=i // 10,
                position=i % 10,
                text=f"tok{i}",
                kind="target" if i % 2 == 0 else "eot",
            )
        )
    return records


def concept_fixture(n_rows: int = 200, d_c: int = 32, k: int = 5, seed: int = 42) -> tuple[ConceptTokenMatrix, SemanticSubspace]:
    """Concept matrix plus its rank-k subspace from the planted records."""
    m = assemble_concept_matrix(concept_records(n_rows=n_rows, d_c=d_c, k=k, seed=seed))
    return m, build_semantic_subspace(m, k)


def condition_fixture(n_tokens: int = 8, d_c: int = 32, seed: int = 7) -> ConditionTokens:
    """Unit-scale condition tokens with sot / word... / eot roles."""
    if n_tokens < 2:
        raise ValueError("need at least sot and eot rows")
    rng = np.random.default_rng(seed)
    tokens = rng.standard_normal((n_tokens, d_c))
    roles = ("sot",) + ("word",) * (n_tokens - 2) + ("eot",)
    return ConditionTokens(tokens=tokens, roles=roles, source_text="synthetic condition fixture")
