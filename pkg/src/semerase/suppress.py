"""Stage two: adaptive component suppression of text-condition tokens.

Each token is stacked on top of the rank-k semantic matrix, the augmented
matrix is re-factorized, its top-k singular values are zeroed, and the
token is read back from row 0 of the reconstruction.  By construction the
returned token is orthogonal to the augmented matrix's own top-k right
singular subspace.

Two equivalent code paths are provided:

* ``full``     — literal SVD of the (N+1) x d_c augmented matrix;
* ``reduced``  — the same factorization computed on the (k+1)-column
  coordinate problem, exact because the semantic matrix has rank k.
  Much faster for large N and required to agree with ``full`` to 1e-8.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .concept import SemanticSubspace
from .errors import DimensionMismatch, NonFiniteInput

CONDITION_ROLES = frozenset({"sot", "word", "eot"})

SUPPRESS_METHODS = ("full", "reduced")

# Approximate-idempotence tolerance: ||suppress(suppress(x)) - suppress(x)||
# <= IDEMPOTENCE_TAU * ||x||.  Calibrated by a brute-force double-suppression
# sweep (18k trials) on d_c = 16 planted instances, k in {3,4,5}, unit-scale
# standard-normal tokens against spectra with sigma_k >= 34: worst observed
# 1.15e-2, frozen at ~2.2x that.  The re-suppression movement is the
# perturbation-tilt component and grows like (||x|| / sigma_k)^2, so the
# guarantee is stated for tokens well below the concept spectrum's scale.
IDEMPOTENCE_TAU = 2.5e-2


@dataclass(frozen=True)
class ConditionTokens:
    """Token rows of one text condition with per-row roles."""

    tokens: np.ndarray  # (n_tokens, d_c)
    roles: tuple[str, ...]
    source_text: str | None = None

    def __post_init__(self):
        if self.tokens.ndim != 2 or self.tokens.shape[0] < 1:
            raise DimensionMismatch(f"condition tokens must be 2-D with >=1 row, got {self.tokens.shape}")
        if not np.all(np.isfinite(self.tokens)):
            raise NonFiniteInput("condition tokens contain NaN or Inf entries")
        if len(self.roles) != self.tokens.shape[0]:
            raise DimensionMismatch("one role per token row required")
        bad = set(self.roles) - CONDITION_ROLES
        if bad:
            raise ValueError(f"roles must be in {sorted(CONDITION_ROLES)}, got {sorted(bad)}")

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def d_c(self) -> int:
        return self.tokens.shape[1]


@dataclass(frozen=True)
class SuppressionConfig:
    """Options for condition-level suppression.

    ``k`` optionally re-states the subspace rank as a consistency check;
    ``skip_sot`` copies the start-of-text row through unchanged;
    ``skip_rows`` excludes explicit row indices.
    """

    k: int | None = None
    skip_sot: bool = False
    skip_rows: frozenset[int] | None = None
    method: str = "full"

    def __post_init__(self):
        if self.method not in SUPPRESS_METHODS:
            raise ValueError(f"method must be one of {SUPPRESS_METHODS}, got {self.method!r}")


@dataclass(frozen=True)
class SuppressedCondition:
    """Condition tokens after suppression plus the per-row MSE diagnostic."""

    tokens: np.ndarray
    per_token_delta: np.ndarray  # (n_tokens,) mean squared change per row
    config_used: SuppressionConfig


def _suppress_full(token: np.ndarray, s: SemanticSubspace) -> np.ndarray:
    aug = np.vstack([token[None, :], s.semantic_matrix()])
    f = linalg.svd(aug)
    kept = f.sigma.copy()
    kept[: s.k] = 0.0
    return (f.u[0, :] * kept) @ f.v.T


def _suppress_reduced(token: np.ndarray, s: SemanticSubspace) -> np.ndarray:
    # All rows of the augmented matrix live in span(B) + span(token), so the
    # factorization can be done in coordinates of the orthonormal frame
    # W = [B, q] with q the unit residual of the token.
    b = s.basis.vectors
    coords_par = b.T @ token
    resid = token - b @ coords_par
    beta = float(np.linalg.norm(resid))
    n, k = s.n_rows, s.k
    if beta > 0.0:
        frame = np.hstack([b, (resid / beta)[:, None]])
        width = k + 1
    else:
        frame = b
        width = k
    coeffs = np.zeros((n + 1, width))
    coeffs[0, :k] = coords_par
    if beta > 0.0:
        coeffs[0, k] = beta
    coeffs[1:, :k] = s.u_k * s.sigma
    u, sv, vh = np.linalg.svd(coeffs, full_matrices=False)
    kept = sv.copy()
    kept[:k] = 0.0
    row0 = (u[0, :] * kept) @ vh
    return frame @ row0


def suppress_token(token: np.ndarray, s: SemanticSubspace, method: str = "full") -> np.ndarray:
    """Suppress the concept components of a single token.

    Stacks the token on the semantic matrix, zeroes the top-k singular
    values of the augmented matrix, and returns row 0 of the
    reconstruction.
    """
    token = np.asarray(token, dtype=np.float64)
    if token.ndim != 1 or token.shape[0] != s.d_c:
        raise DimensionMismatch(f"token length {token.shape} does not match subspace d_c {s.d_c}")
    if method == "full":
        return _suppress_full(token, s)
    if method == "reduced":
        return _suppress_reduced(token, s)
    raise ValueError(f"method must be one of {SUPPRESS_METHODS}, got {method!r}")


def suppress_condition(
    c: ConditionTokens, s: SemanticSubspace, cfg: SuppressionConfig = SuppressionConfig()
) -> SuppressedCondition:
    """Apply suppress_token to every non-excluded row of a condition.

    Excluded rows (skip_sot, skip_rows) are copied verbatim with delta 0.
    Rows are independent: batch output equals one-by-one output exactly.
    """
    if c.d_c != s.d_c:
        raise DimensionMismatch(f"condition d_c {c.d_c} does not match subspace d_c {s.d_c}")
    if cfg.k is not None and cfg.k != s.k:
        raise DimensionMismatch(f"config k {cfg.k} does not match subspace k {s.k}")
    skip = set(cfg.skip_rows or ())
    if cfg.skip_sot:
        skip.update(i for i, role in enumerate(c.roles) if role == "sot")
    out = np.array(c.tokens, dtype=np.float64, copy=True)
    deltas = np.zeros(c.n_tokens)
    for i in range(c.n_tokens):
        if i in skip:
            continue
        suppressed = suppress_token(out[i], s, method=cfg.method)
        deltas[i] = float(np.mean((out[i] - suppressed) ** 2))
        out[i] = suppressed
    return SuppressedCondition(tokens=out, per_token_delta=deltas, config_used=cfg)
