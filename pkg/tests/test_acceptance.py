"""Acceptance suite: one test per headline guarantee, each with its budget.

Every test is self-contained (own fixtures, own oracles) so a pass/fail
line here is meaningful on its own.  Budgets are wall-clock seconds on a
stock CI runner; each test asserts its own elapsed time.
"""

import json
import time

import numpy as np
import pytest
import scipy.linalg

from semerase import cli, fixtures, formats, linalg, optim, perturb, suppress
from semerase.errors import ToolkitError


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False


def gram_singular_values(m):
    """Independent oracle: singular values via eigh of the smaller Gram matrix."""
    g = m.T @ m if m.shape[0] >= m.shape[1] else m @ m.T
    w = scipy.linalg.eigh(g, eigvals_only=True)
    return np.sqrt(np.clip(w, 0.0, None))[::-1]


def test_svd_oracle_equivalence_200_matrices_under_5s():
    rng = np.random.default_rng(1001)
    with Stopwatch() as sw:
        for _ in range(200):
            m = rng.standard_normal((int(rng.integers(2, 65)), int(rng.integers(2, 65))))
            got = linalg.svd(m).sigma
            want = gram_singular_values(m)[: got.shape[0]]
            assert np.max(np.abs(got - want)) <= 1e-8 * max(want[0], 1.0)
    assert sw.elapsed < 5.0


def test_projector_suite_500_cases_under_2s():
    rng = np.random.default_rng(1002)
    with Stopwatch() as sw:
        for _ in range(500):
            d_c = int(rng.integers(2, 65))
            k = int(rng.integers(1, min(8, d_c) + 1))
            b = linalg.basis(linalg.svd(rng.standard_normal((d_c + 4, d_c))), k)
            p = b.vectors @ b.vectors.T
            assert np.max(np.abs(p @ p - p)) <= 1e-10
            assert np.max(np.abs(p - p.T)) <= 1e-10
            assert abs(np.trace(p) - k) <= 1e-10
            x = rng.standard_normal(d_c)
            inside = linalg.project(x, b)
            outside = linalg.project_complement(x, b)
            assert abs((inside @ inside + outside @ outside) - x @ x) <= 1e-10 * max(x @ x, 1.0)
    assert sw.elapsed < 2.0


def test_suppression_exactness_500_tokens_under_10s():
    _, s = fixtures.concept_fixture()
    shat = s.semantic_matrix()
    rng = np.random.default_rng(1003)
    with Stopwatch() as sw:
        for _ in range(500):
            x = rng.standard_normal(s.d_c)
            out = suppress.suppress_token(x, s)
            aug = np.vstack([x[None, :], shat])
            v_top = linalg.svd(aug).v[:, : s.k]
            leak = np.linalg.norm(out @ v_top) / max(np.linalg.norm(x), 1e-30)
            assert leak <= 1e-8
            assert linalg.residual_energy(out, s.basis) <= 0.05
    assert sw.elapsed < 10.0


def test_rank_economy_and_reduced_fast_path():
    _, s = fixtures.concept_fixture()
    shat = s.semantic_matrix()
    sv = np.linalg.svd(shat, compute_uv=False)
    assert sv[s.k] <= 1e-10 * sv[0]
    rng = np.random.default_rng(1004)
    for _ in range(200):
        x = rng.standard_normal(s.d_c)
        aug_sv = np.linalg.svd(np.vstack([x[None, :], shat]), compute_uv=False)
        assert aug_sv[s.k + 1] <= 1e-9 * aug_sv[0]
        full = suppress.suppress_token(x, s, method="full")
        reduced = suppress.suppress_token(x, s, method="reduced")
        assert np.linalg.norm(full - reduced) <= 1e-8 * max(np.linalg.norm(x), 1.0)


def test_gradient_orthogonality_200_gradients_under_1s():
    _, s = fixtures.concept_fixture()
    rng = np.random.default_rng(1005)
    with Stopwatch() as sw:
        for _ in range(200):
            g = rng.standard_normal((int(rng.integers(1, 9)), s.d_c))
            out = optim.project_gradient(g, s.basis)
            norms = np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-30)
            assert np.max(np.abs(out @ s.basis.vectors) / norms) <= 1e-10
    assert sw.elapsed < 1.0


def test_gradient_correctness_50_configs_under_5s():
    rng = np.random.default_rng(1006)
    with Stopwatch() as sw:
        for _ in range(50):
            den = optim.ToyDenoiser(
                n_tokens=int(rng.integers(1, 5)),
                d_c=int(rng.integers(2, 13)),
                state_dim=int(rng.integers(2, 17)),
                seed=int(rng.integers(0, 2**31)),
            )
            x = rng.standard_normal(den.state_dim)
            c = rng.standard_normal((den.n_tokens, den.d_c))
            target = rng.standard_normal(den.noise_dim)
            t = int(rng.integers(0, den.t_max))
            analytic = den.loss_grad(x, t, c, target)
            numeric = optim.finite_diff_gradient(den, x, t, c, target)
            rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-30)
            assert rel <= 1e-5
    assert sw.elapsed < 5.0


def test_subspace_freeze_and_descent_bit_reproducible_under_5s():
    _, s = fixtures.concept_fixture()

    def one_run():
        rng = np.random.default_rng(42)
        original = fixtures.condition_fixture(n_tokens=6, d_c=s.d_c, seed=42)
        suppressed = suppress.suppress_condition(original, s)
        den = optim.ToyDenoiser(n_tokens=6, d_c=s.d_c, seed=42)
        cfg = optim.OptimizationConfig(t_start=30, t_end=50, learning_rate=1e-3, optimizer="plain_gd")
        return optim.run_optimization(original, suppressed, s, den, cfg, rng.standard_normal(den.state_dim))

    with Stopwatch() as sw:
        final1, trace1 = one_run()
        final2, trace2 = one_run()
    assert len(trace1.steps) == 20
    for r in trace1.steps:
        assert r.max_subspace_drift <= 1e-8
        assert r.loss_after <= r.loss_before + 1e-12
    assert np.array_equal(final1, final2)
    assert trace1 == trace2
    assert sw.elapsed < 5.0


def test_davis_kahan_bound_and_wide_regime_under_60s():
    with Stopwatch() as sw:
        for trial in range(200):
            rng = np.random.default_rng([1007, trial])
            k = int(rng.integers(2, 6))
            lead = 20.0 - 2.5 * np.arange(k)
            spectrum = np.concatenate([lead, np.full(6, 0.5)])
            a = fixtures.make_planted_matrix(30, k + 6, spectrum, seed=int(rng.integers(0, 2**31)))
            row = rng.standard_normal(k + 6)
            row /= np.linalg.norm(row)
            rep = perturb.verify_bound(a, row, k=k)
            assert rep.sin_theta <= rep.bound + 1e-12

        spectrum = np.concatenate(
            [60.0 - 5.0 * np.arange(5), 20.0 * 0.85 ** np.arange(20), 0.05 * np.ones(743)]
        )
        big = fixtures.make_planted_matrix(4000, 768, spectrum, seed=1008)
        row = np.random.default_rng(1009).standard_normal(768)
        row /= np.linalg.norm(row)
        rep = perturb.verify_bound(big, row, k=5)
        assert rep.mean_angle_deg < 0.1
        assert rep.sin_theta <= rep.bound + 1e-12
    assert sw.elapsed < 60.0


def test_format_round_trips_and_header_fuzz_under_5s(tmp_path):
    rng = np.random.default_rng(1010)
    with Stopwatch() as sw:
        for i in range(100):
            shape = (int(rng.integers(1, 50)), int(rng.integers(1, 50)))
            m = rng.standard_normal(shape).astype(np.float32).astype(np.float64)
            p = tmp_path / "e.sseb"
            formats.write_embeddings(m, None, p)
            back, _ = formats.read_embeddings(p)
            assert np.array_equal(back, m)
            formats.write_embeddings(back, None, tmp_path / "e2.sseb")
            assert (tmp_path / "e2.sseb").read_bytes() == p.read_bytes()

        m, s = fixtures.concept_fixture(n_rows=30, d_c=20, k=3, seed=int(rng.integers(0, 2**31)))
        p = tmp_path / "s.sses"
        formats.write_subspace(s, p)
        formats.write_subspace(formats.read_subspace(p), tmp_path / "s2.sses")
        assert (tmp_path / "s2.sses").read_bytes() == p.read_bytes()

        for path, reader in ((tmp_path / "e.sseb", formats.read_embeddings), (p, formats.read_subspace)):
            pristine = path.read_bytes()
            for byte_index in range(8):
                for flip in (0x01, 0xFF):
                    corrupt = bytearray(pristine)
                    corrupt[byte_index] ^= flip
                    path.write_bytes(bytes(corrupt))
                    with pytest.raises(ToolkitError):
                        reader(path)
            path.write_bytes(pristine)
    assert sw.elapsed < 5.0


def test_end_to_end_cli_pipeline_under_30s(tmp_path):
    records = fixtures.concept_records(n_rows=200, d_c=32, k=5, seed=42)
    matrix = np.vstack([r.embedding for r in records])
    meta = formats.EmbeddingMetadata(
        sentences=tuple(f"sentence {i}" for i in range(20)),
        tokens=tuple(
            formats.TokenAnnotation(
                row=i, sentence_id=r.sentence_id, position=r.position, text=r.text, kind=r.kind
            )
            for i, r in enumerate(records)
        ),
    )
    formats.write_embeddings(matrix, meta, tmp_path / "emb.sseb")
    cond = fixtures.condition_fixture(n_tokens=8, d_c=32, seed=7)
    formats.write_embeddings(cond.tokens, None, tmp_path / "cond.sseb")

    def run(*argv):
        return cli.main([str(a) for a in argv])

    with Stopwatch() as sw:
        assert run(
            "build-subspace", "--embeddings", tmp_path / "emb.sseb", "--k", 5, "--out", tmp_path / "sub.sses"
        ) == 0
        assert run(
            "suppress", "--subspace", tmp_path / "sub.sses", "--condition", tmp_path / "cond.sseb",
            "--out", tmp_path / "sup.sseb", "--report", tmp_path / "mse.json",
        ) == 0
        assert run(
            "optimize", "--subspace", tmp_path / "sub.sses", "--original", tmp_path / "cond.sseb",
            "--suppressed", tmp_path / "sup.sseb", "--out", tmp_path / "opt.sseb",
            "--trace", tmp_path / "trace.json",
        ) == 0
        assert run(
            "perturb", "--embeddings", tmp_path / "emb.sseb", "--k", 5, "--trials", 5,
            "--out", tmp_path / "perturb.json",
        ) == 0

    s = formats.read_subspace(tmp_path / "sub.sses")
    assert (s.n_rows, s.d_c, s.k) == (200, 32, 5)

    report = json.loads((tmp_path / "mse.json").read_text())
    assert len(report) == 8
    assert all(r["mse"] >= 0.0 for r in report)
    sup, _ = formats.read_embeddings(tmp_path / "sup.sseb")
    for row in sup:
        assert linalg.residual_energy(row, s.basis) <= 0.05

    steps = json.loads((tmp_path / "trace.json").read_text())["steps"]
    assert [r["t"] for r in steps] == list(range(30, 50))
    for r in steps:
        assert r["max_subspace_drift"] <= 1e-8
        assert r["loss_after"] <= r["loss_before"] + 1e-12

    payload = json.loads((tmp_path / "perturb.json").read_text())
    assert payload["reports"][0]["delta_norm"] == 0.0
    for rep in payload["reports"]:
        if rep["bound"] != "+inf":
            assert rep["sin_theta"] <= rep["bound"] + 1e-12
    assert sw.elapsed < 30.0
