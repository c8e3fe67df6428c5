"""semerase: numerical toolkit for subspace-based concept erasure.

Pipeline: stack annotated token embeddings and factor out a rank-k
concept subspace (`concept`), suppress that subspace in text-condition
tokens (`suppress`), refine the suppressed tokens with
subspace-orthogonal gradient steps against a pluggable denoiser
(`optim`), and quantify how stable the subspace is under new data
(`perturb`).  `formats` pins the bit-exact file formats; `cli` exposes
the batch front door; `selfcheck` re-verifies every invariant in place.
"""

from . import errors
from .concept import (
    ConceptTokenMatrix,
    SemanticSubspace,
    TokenRecord,
    assemble_concept_matrix,
    build_semantic_subspace,
)
from .formats import (
    EmbeddingMetadata,
    RunConfig,
    TokenAnnotation,
    VocabularyManifest,
    load_config,
    load_manifest,
    read_embeddings,
    read_subspace,
    write_embeddings,
    write_subspace,
)
from .linalg import SubspaceBasis, SvdFactors, basis, project, project_complement, residual_energy, svd, truncate_reconstruct
from .optim import (
    OptimizationConfig,
    OptimizationTrace,
    StepRecord,
    ToyDenoiser,
    finite_diff_gradient,
    noise_guide_loss,
    project_gradient,
    run_optimization,
    toy_sampler_step,
)
from .perturb import PerturbationReport, davis_kahan_bound, empirical_angles, verify_bound
from .suppress import (
    ConditionTokens,
    SuppressedCondition,
    SuppressionConfig,
    suppress_condition,
    suppress_token,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "SvdFactors",
    "SubspaceBasis",
    "svd",
    "truncate_reconstruct",
    "basis",
    "project",
    "project_complement",
    "residual_energy",
    "TokenRecord",
    "ConceptTokenMatrix",
    "SemanticSubspace",
    "assemble_concept_matrix",
    "build_semantic_subspace",
    "ConditionTokens",
    "SuppressionConfig",
    "SuppressedCondition",
    "suppress_token",
    "suppress_condition",
    "ToyDenoiser",
    "OptimizationConfig",
    "OptimizationTrace",
    "StepRecord",
    "noise_guide_loss",
    "project_gradient",
    "toy_sampler_step",
    "finite_diff_gradient",
    "run_optimization",
    "PerturbationReport",
    "davis_kahan_bound",
    "empirical_angles",
    "verify_bound",
    "TokenAnnotation",
    "EmbeddingMetadata",
    "RunConfig",
    "VocabularyManifest",
    "read_embeddings",
    "write_embeddings",
    "read_subspace",
    "write_subspace",
    "load_config",
    "load_manifest",
    "__version__",
]
