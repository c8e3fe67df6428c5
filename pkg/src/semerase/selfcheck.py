"""Built-in property suite: every module invariant as a named runtime check.

`semerase verify` runs these on synthetic data and reports one line per
property.  The suite is self-contained (no test framework, no network,
no fixtures on disk except a temp directory) so a deployed installation
can be validated in place.

Fault injection exists so the failure path itself is testable: passing
``fault="broken-projector"`` feeds the projector-algebra check a basis
with one rescaled column, which must make the run fail with exit 1.
"""

from __future__ import annotations

import json
import math
import tempfile
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from . import concept, fixtures, formats, linalg, optim, perturb, suppress

FAULTS = ("broken-projector",)


class CheckFailure(AssertionError):
    """A property did not hold; the message carries the evidence."""


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise CheckFailure(msg)


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float


def _gram_singular_values(m: np.ndarray) -> np.ndarray:
    """Independent oracle: singular values via eigh of the smaller Gram matrix."""
    if m.shape[0] >= m.shape[1]:
        gram = m.T @ m
    else:
        gram = m @ m.T
    eigs = scipy.linalg.eigh(gram, eigvals_only=True)
    return np.sqrt(np.clip(eigs[::-1], 0.0, None))


def check_svd_oracle(rng: np.random.Generator, fault: str | None) -> str:
    worst = 0.0
    for _ in range(200):
        rows = int(rng.integers(2, 65))
        cols = int(rng.integers(2, 65))
        m = rng.standard_normal((rows, cols))
        f = linalg.svd(m)
        ref = _gram_singular_values(m)
        worst = max(worst, float(np.max(np.abs(f.sigma - ref))) / float(ref[0]))
        _check(worst <= 1e-8, f"singular values deviate from Gram-eigh oracle by {worst:.3e}")
    return f"200 matrices <= 64x64, worst relative deviation {worst:.2e}"


def check_svd_determinism(rng: np.random.Generator, fault: str | None) -> str:
    for _ in range(20):
        m = rng.standard_normal((int(rng.integers(2, 30)), int(rng.integers(2, 30))))
        f1 = linalg.svd(m)
        f2 = linalg.svd(m.copy())
        _check(
            np.array_equal(f1.u, f2.u) and np.array_equal(f1.sigma, f2.sigma) and np.array_equal(f1.v, f2.v),
            "repeated factorization of identical input is not bit-identical",
        )
        pivots = f1.v[np.argmax(np.abs(f1.v), axis=0), np.arange(f1.v.shape[1])]
        _check(bool(np.all(pivots >= 0.0)), "sign convention violated: a pivot entry is negative")
    return "20 matrices: bit-identical refactorization, pivots non-negative"


def check_projector_algebra(rng: np.random.Generator, fault: str | None) -> str:
    worst = 0.0
    for trial in range(500):
        d_c = int(rng.integers(2, 65))
        k = int(rng.integers(1, min(8, d_c) + 1))
        f = linalg.svd(rng.standard_normal((d_c + 5, d_c)))
        b = linalg.basis(f, k)
        vecs = b.vectors
        if fault == "broken-projector" and trial == 0:
            vecs = vecs.copy()
            vecs[:, 0] *= 1.01
        p = vecs @ vecs.T
        idem_err = float(np.linalg.norm(p @ p - p))
        worst = max(worst, idem_err, float(np.linalg.norm(p - p.T)), abs(float(np.trace(p)) - k))
        _check(idem_err <= 1e-10, f"P^2 != P (trial {trial}, err {idem_err:.3e})")
        _check(np.linalg.norm(p - p.T) <= 1e-10, f"P != P^T (trial {trial})")
        _check(abs(float(np.trace(p)) - k) <= 1e-8, f"trace(P) != k (trial {trial})")
        x = rng.standard_normal(d_c)
        proj = linalg.project(x, b)
        comp = linalg.project_complement(x, b)
        pyth = abs(float(x @ x) - (float(proj @ proj) + float(comp @ comp)))
        _check(pyth <= 1e-10 * max(1.0, float(x @ x)), f"Pythagoras violated (trial {trial}, err {pyth:.3e})")
    return f"500 cases (d_c <= 64, k <= 8), worst error {worst:.2e}"


def check_subspace_rank(rng: np.random.Generator, fault: str | None) -> str:
    m, s = fixtures.concept_fixture()
    shat = s.semantic_matrix()
    sv = np.linalg.svd(shat, compute_uv=False)
    _check(sv[s.k] <= 1e-10 * sv[0], f"sigma_{s.k + 1}(semantic matrix) = {sv[s.k]:.3e} not ~0")
    for i in range(0, shat.shape[0], 37):
        _check(
            linalg.residual_energy(shat[i], s.basis) >= 1.0 - 1e-10,
            f"semantic-matrix row {i} leaves span(basis)",
        )
    perm = rng.permutation(m.n_rows)
    m2 = concept.ConceptTokenMatrix(matrix=m.matrix[perm], provenance=tuple(m.provenance[i] for i in perm))
    s2 = concept.build_semantic_subspace(m2, s.k)
    sin_theta = perturb.principal_sin_theta(s.basis.vectors, s2.basis.vectors)
    _check(
        math.degrees(math.asin(min(1.0, sin_theta))) <= math.degrees(1e-8),
        f"row permutation rotated span(basis) by sin theta = {sin_theta:.3e}",
    )
    return "rank(semantic matrix) = k, rows inside span, span order-invariant"


def check_suppression_exactness(rng: np.random.Generator, fault: str | None) -> str:
    _, s = fixtures.concept_fixture()
    worst_aug = 0.0
    worst_res = 0.0
    for _ in range(500):
        token = rng.standard_normal(s.d_c)
        out = suppress.suppress_token(token, s)
        aug = np.vstack([token[None, :], s.semantic_matrix()])
        f = linalg.svd(aug)
        own_k = linalg.SubspaceBasis(vectors=f.v[:, : s.k].copy())
        rel = float(np.linalg.norm(own_k.vectors.T @ out)) / max(float(np.linalg.norm(token)), 1e-30)
        res = linalg.residual_energy(out, s.basis) if np.linalg.norm(out) > 0 else 0.0
        worst_aug = max(worst_aug, rel)
        worst_res = max(worst_res, res)
        _check(rel <= 1e-8, f"suppressed token keeps augmented-top-k component ({rel:.3e})")
        _check(res <= 0.05, f"residual energy in concept span is {res:.3e} > 0.05")
    return f"500 tokens: worst augmented-span leak {worst_aug:.2e}, worst residual energy {worst_res:.2e}"


def check_suppression_rank_economy(rng: np.random.Generator, fault: str | None) -> str:
    _, s = fixtures.concept_fixture()
    worst_tail = 0.0
    worst_match = 0.0
    for _ in range(200):
        token = rng.standard_normal(s.d_c) * float(rng.uniform(0.1, 3.0))
        aug = np.vstack([token[None, :], s.semantic_matrix()])
        sv = np.linalg.svd(aug, compute_uv=False)
        tail = float(sv[s.k + 1] / sv[0])
        worst_tail = max(worst_tail, tail)
        _check(tail <= 1e-9, f"augmented matrix has sigma_(k+2)/sigma_1 = {tail:.3e}")
        full = suppress.suppress_token(token, s, method="full")
        red = suppress.suppress_token(token, s, method="reduced")
        diff = float(np.linalg.norm(full - red)) / max(float(np.linalg.norm(token)), 1e-30)
        worst_match = max(worst_match, diff)
        _check(diff <= 1e-8, f"reduced path deviates from full SVD by {diff:.3e}")
    return f"200 tokens: worst tail ratio {worst_tail:.2e}, full-vs-reduced {worst_match:.2e}"


def check_suppression_idempotence(rng: np.random.Generator, fault: str | None) -> str:
    spectrum = fixtures.planted_spectrum(k=4, tail=6)
    matrix = fixtures.make_planted_matrix(60, 16, spectrum, seed=11)
    records = [
        concept.TokenRecord(embedding=row, sentence_id=0, position=i, text=f"t{i}", kind="target")
        for i, row in enumerate(matrix)
    ]
    m = concept.assemble_concept_matrix(records)
    s = concept.build_semantic_subspace(m, 4)
    worst = 0.0
    for _ in range(200):
        # Unit-scale tokens: the calibration regime behind IDEMPOTENCE_TAU.
        token = rng.standard_normal(16)
        once = suppress.suppress_token(token, s)
        twice = suppress.suppress_token(once, s)
        ratio = float(np.linalg.norm(twice - once)) / float(np.linalg.norm(token))
        worst = max(worst, ratio)
        _check(
            ratio <= suppress.IDEMPOTENCE_TAU,
            f"double suppression moved token by {ratio:.3e} > tau = {suppress.IDEMPOTENCE_TAU:g}",
        )
    return f"200 tokens at d_c = 16: worst re-suppression change {worst:.2e} (tau {suppress.IDEMPOTENCE_TAU:g})"


def check_suppression_independence(rng: np.random.Generator, fault: str | None) -> str:
    _, s = fixtures.concept_fixture()
    cond = fixtures.condition_fixture(n_tokens=6, d_c=32, seed=int(rng.integers(0, 2**31)))
    batch = suppress.suppress_condition(cond, s)
    for i in range(cond.n_tokens):
        solo = suppress.suppress_token(cond.tokens[i], s)
        _check(np.array_equal(batch.tokens[i], solo), f"batch row {i} differs from one-by-one result")
    return "batch suppression bit-identical to per-token calls"


def check_gradient_orthogonality(rng: np.random.Generator, fault: str | None) -> str:
    worst = 0.0
    for _ in range(200):
        d_c = int(rng.integers(4, 65))
        k = int(rng.integers(1, min(8, d_c - 1) + 1))
        f = linalg.svd(rng.standard_normal((d_c + 3, d_c)))
        b = linalg.basis(f, k)
        g = rng.standard_normal((int(rng.integers(1, 12)), d_c))
        g_perp = optim.project_gradient(g, b)
        inner = np.abs(g_perp @ b.vectors)
        scale = np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-30)
        rel = float(np.max(inner / scale))
        worst = max(worst, rel)
        _check(rel <= 1e-10, f"projected gradient keeps subspace component {rel:.3e}")
    return f"200 gradients: worst |<row, B_j>| / ||row|| = {worst:.2e}"


def check_gradient_correctness(rng: np.random.Generator, fault: str | None) -> str:
    worst = 0.0
    for i in range(50):
        den = optim.ToyDenoiser(n_tokens=3, d_c=8, state_dim=8, seed=int(rng.integers(0, 2**31)))
        t = int(rng.integers(0, den.t_max))
        x = rng.standard_normal(den.state_dim)
        c = rng.standard_normal((den.n_tokens, den.d_c))
        target = rng.standard_normal(den.noise_dim)
        analytic = den.loss_grad(x, t, c, target)
        numeric = optim.finite_diff_gradient(den, x, t, c, target)
        rel = float(np.linalg.norm(analytic - numeric)) / max(float(np.linalg.norm(numeric)), 1e-30)
        worst = max(worst, rel)
        _check(rel <= 1e-5, f"analytic gradient deviates from finite differences by {rel:.3e} (config {i})")
    return f"50 configurations: worst relative deviation {worst:.2e}"


def _small_optimization(seed: int = 42):
    spectrum = fixtures.planted_spectrum(k=3, tail=5)
    matrix = fixtures.make_planted_matrix(40, 16, spectrum, seed=5)
    records = [
        concept.TokenRecord(embedding=row, sentence_id=0, position=i, text=f"t{i}", kind="eot")
        for i, row in enumerate(matrix)
    ]
    s = concept.build_semantic_subspace(concept.assemble_concept_matrix(records), 3)
    rng = np.random.default_rng(seed)
    original = suppress.ConditionTokens(
        tokens=rng.standard_normal((4, 16)), roles=("sot", "word", "word", "eot")
    )
    suppressed = suppress.suppress_condition(original, s)
    den = optim.ToyDenoiser(n_tokens=4, d_c=16, state_dim=16, seed=seed)
    cfg = optim.OptimizationConfig()
    x0 = rng.standard_normal(16)
    return optim.run_optimization(original, suppressed, s, den, cfg, x0)


def check_optimizer_freeze_descent(rng: np.random.Generator, fault: str | None) -> str:
    final1, trace1 = _small_optimization()
    final2, trace2 = _small_optimization()
    _check(np.array_equal(final1, final2), "two seeded runs differ in final tokens")
    _check(trace1 == trace2, "two seeded runs differ in trace")
    _check(len(trace1.steps) == 20, f"expected 20 steps, got {len(trace1.steps)}")
    for r in trace1.steps:
        _check(r.max_subspace_drift <= 1e-8, f"step t={r.t}: subspace drift {r.max_subspace_drift:.3e}")
        _check(r.loss_after <= r.loss_before + 1e-12, f"step t={r.t}: loss increased")
    return "20 steps: drift <= 1e-8, loss monotone, trace bit-reproducible"


def check_davis_kahan_bound(rng: np.random.Generator, fault: str | None) -> str:
    worst_margin = math.inf
    for trial in range(200):
        d = int(rng.integers(8, 33))
        n = d + int(rng.integers(4, 40))
        k = int(rng.integers(1, 6))
        lead = 20.0 - 2.5 * np.arange(k)
        tail = rng.uniform(0.5, 3.0) * 0.8 ** np.arange(min(d, n) - k)
        spectrum = np.concatenate([lead, tail])
        spectrum = np.sort(spectrum)[::-1]
        if spectrum[k - 1] - spectrum[k] < 1.0:
            spectrum[k:] *= 0.5
        a = fixtures.make_planted_matrix(n, d, spectrum, seed=int(rng.integers(0, 2**31)))
        a_new = rng.standard_normal(d) * float(rng.uniform(0.1, 1.5))
        report = perturb.verify_bound(a, a_new, k)
        _check(
            report.sin_theta <= report.bound,
            f"trial {trial}: sin theta {report.sin_theta:.3e} > bound {report.bound:.3e}",
        )
        if report.bound > 0:
            worst_margin = min(worst_margin, report.bound - report.sin_theta)
    return f"200 planted trials: bound held in all (smallest slack {worst_margin:.2e})"


def check_davis_kahan_regime(rng: np.random.Generator, fault: str | None) -> str:
    spectrum = fixtures.planted_spectrum(k=5, tail=20, top=60.0, step=5.0, tail_scale=4.0)
    a = fixtures.make_planted_matrix(4000, 768, spectrum, seed=42)
    a_new = rng.standard_normal(768)
    a_new /= np.linalg.norm(a_new)
    report = perturb.verify_bound(a, a_new, 5)
    _check(
        report.mean_angle_deg < 0.1,
        f"mean rotation angle {report.mean_angle_deg:.4f} deg >= 0.1 deg",
    )
    return f"4000x768 planted matrix + unit row: mean angle {report.mean_angle_deg:.2e} deg"


def check_format_roundtrip(rng: np.random.Generator, fault: str | None) -> str:
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "m.sseb"
        for _ in range(100):
            rows = int(rng.integers(1, 40))
            cols = int(rng.integers(1, 40))
            m = rng.standard_normal((rows, cols)).astype(np.float32).astype(np.float64)
            formats.write_embeddings(m, None, path)
            back, _ = formats.read_embeddings(path)
            _check(np.array_equal(back, m), "embedding round-trip is not bit-exact")
        blob = path.read_bytes()
        rejected = 0
        for pos in range(8):
            for delta in (1, 0x80):
                corrupted = bytearray(blob)
                corrupted[pos] = (corrupted[pos] + delta) % 256
                bad = Path(tmp) / "bad.sseb"
                bad.write_bytes(bytes(corrupted))
                try:
                    formats.read_embeddings(bad)
                except (formats.BadMagic, formats.VersionUnsupported, formats.TruncatedPayload, formats.SchemaViolation):
                    rejected += 1
                else:
                    raise CheckFailure(f"corrupted header byte {pos} (+{delta}) was accepted")
        _, s = fixtures.concept_fixture(n_rows=50, d_c=16, k=3)
        sub_path = Path(tmp) / "s.ssesub"
        formats.write_subspace(s, sub_path)
        s2 = formats.read_subspace(sub_path)
        formats.write_subspace(s2, Path(tmp) / "s2.ssesub")
        _check(
            sub_path.read_bytes() == (Path(tmp) / "s2.ssesub").read_bytes(),
            "subspace bundle round-trip is not bit-exact",
        )
    return f"100 embedding round-trips bit-exact; {rejected}/16 header corruptions rejected; bundle round-trip bit-exact"


def check_config_defaults(rng: np.random.Generator, fault: str | None) -> str:
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "cfg.json"
        p.write_text("{}")
        cfg = formats.load_config(p)
        _check(
            (cfg.k, cfg.t_start, cfg.t_end, cfg.learning_rate) == (5, 30, 50, 0.001)
            and (cfg.optimizer, cfg.updates_per_step, cfg.skip_sot, cfg.seed) == ("plain_gd", 1, False, 42),
            f"defaults wrong: {cfg}",
        )
        p.write_text('{"k": 0}')
        try:
            formats.load_config(p)
        except formats.SchemaViolation as e:
            _check("k must be" in str(e), f"unexpected message: {e}")
        else:
            raise CheckFailure("k = 0 accepted")
    return "empty config gives documented defaults; k = 0 rejected"


def check_pipeline_end_to_end(rng: np.random.Generator, fault: str | None) -> str:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        records = fixtures.concept_records()
        matrix = np.vstack([r.embedding for r in records])
        meta = formats.EmbeddingMetadata(
            sentences=("synthetic",),
            tokens=tuple(
                formats.TokenAnnotation(row=i, sentence_id=r.sentence_id, position=r.position, text=r.text, kind=r.kind)
                for i, r in enumerate(records)
            ),
        )
        emb_path = tmp / "concept.sseb"
        formats.write_embeddings(matrix, meta, emb_path)
        mat, meta2 = formats.read_embeddings(emb_path)
        recs = [
            concept.TokenRecord(
                embedding=mat[t.row], sentence_id=t.sentence_id, position=t.position, text=t.text, kind=t.kind
            )
            for t in meta2.tokens
        ]
        m = concept.assemble_concept_matrix(recs)
        s = concept.build_semantic_subspace(m, 5)
        sub_path = tmp / "concept.ssesub"
        formats.write_subspace(s, sub_path)
        s_loaded = formats.read_subspace(sub_path)
        cond = fixtures.condition_fixture()
        suppressed = suppress.suppress_condition(cond, s_loaded, suppress.SuppressionConfig(skip_sot=True))
        _check(suppressed.per_token_delta[0] == 0.0, "skip_sot did not zero the sot delta")
        den = optim.ToyDenoiser(n_tokens=cond.n_tokens, d_c=cond.d_c, seed=42)
        x0 = np.random.default_rng(42).standard_normal(den.state_dim)
        final, trace = optim.run_optimization(cond, suppressed, s_loaded, den, optim.OptimizationConfig(), x0)
        for r in trace.steps:
            _check(r.max_subspace_drift <= 1e-8, f"pipeline: drift {r.max_subspace_drift:.3e} at t={r.t}")
            _check(r.loss_after <= r.loss_before + 1e-12, f"pipeline: loss increased at t={r.t}")
        report = perturb.verify_bound(mat, rng.standard_normal(mat.shape[1]), 5)
        _check(math.isfinite(report.bound), "pipeline: degenerate gap on planted fixture")
        json.dumps(report.to_json_dict())
        json.dumps(trace.to_json_dict())
    return "file pipeline build -> suppress -> optimize -> perturb holds all invariants"


CHECKS = (
    ("svd-oracle", check_svd_oracle),
    ("svd-determinism", check_svd_determinism),
    ("projector-algebra", check_projector_algebra),
    ("subspace-rank", check_subspace_rank),
    ("suppression-exactness", check_suppression_exactness),
    ("suppression-rank-economy", check_suppression_rank_economy),
    ("suppression-idempotence", check_suppression_idempotence),
    ("suppression-independence", check_suppression_independence),
    ("gradient-orthogonality", check_gradient_orthogonality),
    ("gradient-correctness", check_gradient_correctness),
    ("optimizer-freeze-descent", check_optimizer_freeze_descent),
    ("davis-kahan-bound", check_davis_kahan_bound),
    ("davis-kahan-regime", check_davis_kahan_regime),
    ("format-roundtrip", check_format_roundtrip),
    ("config-defaults", check_config_defaults),
    ("pipeline-end-to-end", check_pipeline_end_to_end),
)


def run_all(fault: str | None = None, seed: int = 42) -> list[CheckResult]:
    """Run every named check; a fault name deliberately breaks its target check."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; known faults: {list(FAULTS)}")
    results = []
    for name, fn in CHECKS:
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        start = time.perf_counter()
        try:
            detail = fn(rng, fault)
            ok = True
        except CheckFailure as e:
            detail = str(e)
            ok = False
        elapsed = time.perf_counter() - start
        results.append(CheckResult(name=name, ok=ok, detail=detail, seconds=elapsed))
    return results
