"""Stage three: gradient-orthogonal refinement of suppressed tokens.

The per-step loss is the squared distance between the denoiser output
under the original condition (a constant target; no gradient flows
through it) and under the current tokens.  Gradients are projected onto
the orthogonal complement of the concept subspace before every update,
so the tokens can only move along concept-free directions; the trace
records the (relative) subspace drift of each step so the freeze
guarantee is checkable after the fact.

A linear toy denoiser stands in for a real diffusion UNet at desk scale.
Its per-step loss is a convex quadratic in the tokens, which makes plain
gradient descent provably monotone below a curvature-derived step bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .concept import SemanticSubspace
from .errors import DimensionMismatch, NonFiniteGradient, ShapeMismatch
from .linalg import SubspaceBasis
from .suppress import ConditionTokens, SuppressedCondition

OPTIMIZERS = ("plain_gd", "adam_like")


class DenoiserOracle(Protocol):
    """Deterministic eps(x, t, c) evaluator with an exact condition gradient."""

    state_dim: int
    noise_dim: int
    t_max: int
    n_tokens: int
    d_c: int

    def eps(self, x: np.ndarray, t: int, c: np.ndarray) -> np.ndarray: ...

    def loss_grad(self, x: np.ndarray, t: int, c: np.ndarray, target: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. c of 0.5 * ||eps(x, t, c) - target||^2."""
        ...


@dataclass
class ToyDenoiser:
    """Linear stand-in for a diffusion UNet.

    eps(x, t, c) = A_t x + L_t vec(c) + d_t with per-step matrices drawn
    deterministically from (seed, t) and scaled by 1/sqrt(fan-in), so the
    per-step loss is a convex quadratic in c with curvature 2 L_t^T L_t.
    """

    n_tokens: int
    d_c: int
    state_dim: int = 32
    noise_dim: int | None = None
    seed: int = 42
    t_max: int = 50
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.noise_dim is None:
            self.noise_dim = self.state_dim

    def _mats(self, t: int):
        got = self._cache.get(t)
        if got is None:
            rng = np.random.default_rng([self.seed, t])
            cdim = self.n_tokens * self.d_c
            a = rng.standard_normal((self.noise_dim, self.state_dim)) / np.sqrt(self.state_dim)
            lin = rng.standard_normal((self.noise_dim, cdim)) / np.sqrt(cdim)
            offset = rng.standard_normal(self.noise_dim) / np.sqrt(self.noise_dim)
            got = self._cache[t] = (a, lin, offset)
        return got

    def _check(self, x, c):
        if x.shape != (self.state_dim,):
            raise ShapeMismatch(f"state shape {x.shape} != ({self.state_dim},)")
        if c.shape != (self.n_tokens, self.d_c):
            raise ShapeMismatch(f"condition shape {c.shape} != ({self.n_tokens}, {self.d_c})")

    def eps(self, x, t, c):
        x = np.asarray(x, dtype=np.float64)
        c = np.asarray(c, dtype=np.float64)
        self._check(x, c)
        a, lin, offset = self._mats(t)
        return a @ x + lin @ c.ravel() + offset

    def loss_grad(self, x, t, c, target):
        c = np.asarray(c, dtype=np.float64)
        residual = self.eps(x, t, c) - np.asarray(target, dtype=np.float64)
        _, lin, _ = self._mats(t)
        return (lin.T @ residual).reshape(self.n_tokens, self.d_c)

    def curvature(self, t: int) -> float:
        """Largest eigenvalue of L_t^T L_t; plain GD is monotone for lr <= 1/curvature."""
        _, lin, _ = self._mats(t)
        return float(np.linalg.norm(lin, 2) ** 2)


@dataclass(frozen=True)
class OptimizationConfig:
    """Step window, learning rate and update rule for the refinement loop."""

    t_start: int = 30
    t_end: int = 50
    learning_rate: float = 1e-3
    optimizer: str = "plain_gd"
    updates_per_step: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0

    def validate(self, t_max: int | None = None) -> None:
        if not 0 <= self.t_start <= self.t_end:
            raise ValueError(f"need 0 <= t_start <= t_end, got [{self.t_start}, {self.t_end}]")
        if t_max is not None and self.t_end > t_max:
            raise ValueError(f"t_end {self.t_end} exceeds denoiser t_max {t_max}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.updates_per_step < 1:
            raise ValueError("updates_per_step must be >= 1")


@dataclass(frozen=True)
class StepRecord:
    """Diagnostics for one sampling step of the refinement loop.

    ``max_subspace_drift`` is ||B^T (c_after - c_before)^T||_F divided by
    ||c_before||_F: the relative amount the step moved the tokens inside
    the concept subspace.  The freeze guarantee is drift <= 1e-8.
    """

    t: int
    loss_before: float
    loss_after: float
    max_subspace_drift: float
    grad_norm: float
    grad_subspace_component_norm: float


@dataclass(frozen=True)
class OptimizationTrace:
    steps: tuple[StepRecord, ...]

    def to_json_dict(self) -> dict:
        return {
            "steps": [
                {
                    "t": r.t,
                    "loss_before": r.loss_before,
                    "loss_after": r.loss_after,
                    "max_subspace_drift": r.max_subspace_drift,
                    "grad_norm": r.grad_norm,
                    "grad_subspace_component_norm": r.grad_subspace_component_norm,
                }
                for r in self.steps
            ]
        }


def noise_guide_loss(eps_hat: np.ndarray, eps: np.ndarray) -> float:
    """Squared Euclidean distance between the two predicted noises."""
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps_hat.shape != eps.shape:
        raise DimensionMismatch(f"noise shapes differ: {eps_hat.shape} vs {eps.shape}")
    d = eps_hat - eps
    return float(d @ d)


def _basis_vectors(b) -> np.ndarray:
    return b.vectors if isinstance(b, SubspaceBasis) else np.asarray(b, dtype=np.float64)


def project_gradient(g: np.ndarray, b) -> np.ndarray:
    """Row-wise complement projection g - g B B^T."""
    g = np.asarray(g, dtype=np.float64)
    vecs = _basis_vectors(b)
    if g.ndim != 2 or g.shape[1] != vecs.shape[0]:
        raise DimensionMismatch(f"gradient cols {g.shape} do not match basis dim {vecs.shape[0]}")
    return g - (g @ vecs) @ vecs.T


def toy_sampler_step(x: np.ndarray, eps: np.ndarray, t: int, big_t: int) -> np.ndarray:
    """Deterministic Euler stand-in for a sampler step: x - eps / T."""
    x = np.asarray(x, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x.shape != eps.shape:
        raise DimensionMismatch(f"state/noise shapes differ: {x.shape} vs {eps.shape}")
    if big_t < 1:
        raise ValueError("total step count must be >= 1")
    return x - eps / float(big_t)


def finite_diff_gradient(den: DenoiserOracle, x, t, c, target) -> np.ndarray:
    """Central-difference gradient of 0.5*||eps(x,t,c) - target||^2 per coordinate.

    Validation oracle for analytic gradients; perturbation scaled to the
    token magnitude.
    """
    c = np.asarray(c, dtype=np.float64)
    h = 1e-5 * max(1.0, float(np.max(np.abs(c))))
    grad = np.zeros_like(c)
    for i in range(c.shape[0]):
        for j in range(c.shape[1]):
            cp = c.copy()
            cp[i, j] += h
            lp = 0.5 * noise_guide_loss(den.eps(x, t, cp), target)
            cm = c.copy()
            cm[i, j] -= h
            lm = 0.5 * noise_guide_loss(den.eps(x, t, cm), target)
            grad[i, j] = (lp - lm) / (2.0 * h)
    return grad


def run_optimization(
    original: ConditionTokens,
    suppressed: SuppressedCondition,
    s: SemanticSubspace,
    den: DenoiserOracle,
    cfg: OptimizationConfig,
    x_init: np.ndarray,
) -> tuple[np.ndarray, OptimizationTrace]:
    """Refine suppressed tokens over the sampling window [t_start, t_end).

    Per step: evaluate the denoiser under the original tokens (constant
    target), take the gradient of the squared noise distance w.r.t. the
    current tokens only, project it onto the complement of the concept
    subspace, update, then advance the state with the pre-update noise.
    For adam_like the scaled update is re-projected before application so
    coordinate-wise rescaling cannot leak back into the subspace.
    """
    cfg.validate(t_max=den.t_max)
    if original.tokens.shape != suppressed.tokens.shape:
        raise ShapeMismatch(
            f"original {original.tokens.shape} vs suppressed {suppressed.tokens.shape} token shapes differ"
        )
    if original.d_c != s.d_c:
        raise ShapeMismatch(f"condition d_c {original.d_c} does not match subspace d_c {s.d_c}")
    if original.tokens.shape != (den.n_tokens, den.d_c):
        raise ShapeMismatch(
            f"condition shape {original.tokens.shape} does not match denoiser ({den.n_tokens}, {den.d_c})"
        )
    x = np.asarray(x_init, dtype=np.float64).copy()
    if x.shape != (den.state_dim,):
        raise ShapeMismatch(f"x_init shape {x.shape} != ({den.state_dim},)")

    # Re-orthonormalize the basis so the projector is exact even for bases
    # rehydrated from f32 bundles; the span (and hence the subspace) is
    # unchanged, and QR is deterministic.
    q, _ = np.linalg.qr(s.basis.vectors)

    target_tokens = original.tokens
    current = np.array(suppressed.tokens, dtype=np.float64, copy=True)
    lr = cfg.learning_rate
    adam_m = np.zeros_like(current)
    adam_v = np.zeros_like(current)
    adam_steps = 0
    records = []

    for t in range(cfg.t_start, cfg.t_end):
        eps_hat = den.eps(x, t, target_tokens)
        eps0 = den.eps(x, t, current)
        loss_before = noise_guide_loss(eps_hat, eps0)
        if not math.isfinite(loss_before):
            raise NonFiniteGradient(f"loss overflowed at step t={t}; learning rate likely divergent")
        before = current.copy()
        grad_norm = 0.0
        grad_sub_norm = 0.0
        for j in range(cfg.updates_per_step):
            g = 2.0 * den.loss_grad(x, t, current, eps_hat)
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient at step t={t}")
            g_perp = g - (g @ q) @ q.T
            if j == 0:
                grad_norm = float(np.linalg.norm(g))
                grad_sub_norm = float(np.linalg.norm(g @ q))
            if cfg.optimizer == "plain_gd":
                step_vec = g_perp
            else:
                adam_steps += 1
                adam_m = cfg.beta1 * adam_m + (1.0 - cfg.beta1) * g_perp
                adam_v = cfg.beta2 * adam_v + (1.0 - cfg.beta2) * g_perp**2
                m_hat = adam_m / (1.0 - cfg.beta1**adam_steps)
                v_hat = adam_v / (1.0 - cfg.beta2**adam_steps)
                step_vec = m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
                if cfg.weight_decay:
                    step_vec = step_vec + cfg.weight_decay * current
                step_vec = step_vec - (step_vec @ q) @ q.T
            current = current - lr * step_vec
            if not np.all(np.isfinite(current)):
                raise NonFiniteGradient(f"tokens diverged at step t={t}")
        scale = float(np.linalg.norm(before))
        drift = float(np.linalg.norm((current - before) @ q)) / (scale if scale > 0.0 else 1.0)
        loss_after = noise_guide_loss(eps_hat, den.eps(x, t, current))
        if not math.isfinite(loss_after):
            raise NonFiniteGradient(f"loss overflowed at step t={t}; learning rate likely divergent")
        records.append(
            StepRecord(
                t=t,
                loss_before=loss_before,
                loss_after=loss_after,
                max_subspace_drift=drift,
                grad_norm=grad_norm,
                grad_subspace_component_norm=grad_sub_norm,
            )
        )
        x = toy_sampler_step(x, eps0, t, cfg.t_end)

    return current, OptimizationTrace(steps=tuple(records))
