"""Command-line pipeline: exit codes, artifacts, determinism, composability."""

import json
import shutil
import subprocess

import numpy as np
import pytest

from semerase import cli, concept, fixtures, formats, suppress


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def write_concept_embeddings(path, n_rows=200, d_c=32, k=5, seed=42):
    """Planted-spectrum embedding file with a target/eot sidecar."""
    records = fixtures.concept_records(n_rows=n_rows, d_c=d_c, k=k, seed=seed)
    matrix = np.vstack([r.embedding for r in records])
    meta = formats.EmbeddingMetadata(
        sentences=tuple(f"sentence {i}" for i in range(n_rows // 10)),
        tokens=tuple(
            formats.TokenAnnotation(
                row=i, sentence_id=r.sentence_id, position=r.position, text=r.text, kind=r.kind
            )
            for i, r in enumerate(records)
        ),
    )
    formats.write_embeddings(matrix, meta, path)
    return matrix


def write_condition(path, n_tokens=6, d_c=32, seed=7):
    cond = fixtures.condition_fixture(n_tokens=n_tokens, d_c=d_c, seed=seed)
    formats.write_embeddings(cond.tokens, None, path)
    return cond


@pytest.fixture()
def workdir(tmp_path):
    write_concept_embeddings(tmp_path / "emb.sseb")
    write_condition(tmp_path / "cond.sseb")
    assert run_cli("build-subspace", "--embeddings", tmp_path / "emb.sseb", "--k", 5, "--out", tmp_path / "sub.sses") == 0
    return tmp_path


class TestBuildSubspace:
    def test_reports_shape_and_planted_spectrum(self, tmp_path, capsys):
        write_concept_embeddings(tmp_path / "emb.sseb")
        rc = run_cli("build-subspace", "--embeddings", tmp_path / "emb.sseb", "--k", 5, "--out", tmp_path / "sub.sses")
        assert rc == 0
        err = capsys.readouterr().err
        assert "N=200 d_c=32 k=5" in err
        s = formats.read_subspace(tmp_path / "sub.sses")
        np.testing.assert_allclose(s.sigma, [50, 46, 42, 38, 34], rtol=1e-5)

    def test_selection_filters_rows(self, tmp_path):
        write_concept_embeddings(tmp_path / "emb.sseb")
        rc = run_cli(
            "build-subspace", "--embeddings", tmp_path / "emb.sseb", "--k", 3,
            "--select", "target", "--out", tmp_path / "sub.sses",
        )
        assert rc == 0
        assert formats.read_subspace(tmp_path / "sub.sses").n_rows == 100

    def test_zero_k_is_usage_error(self, tmp_path):
        write_concept_embeddings(tmp_path / "emb.sseb")
        rc = run_cli("build-subspace", "--embeddings", tmp_path / "emb.sseb", "--k", 0, "--out", tmp_path / "s.sses")
        assert rc == 2

    def test_unknown_kind_is_usage_error(self, tmp_path):
        write_concept_embeddings(tmp_path / "emb.sseb")
        rc = run_cli(
            "build-subspace", "--embeddings", tmp_path / "emb.sseb",
            "--select", "adjective", "--out", tmp_path / "s.sses",
        )
        assert rc == 2

    def test_empty_selection_is_usage_error(self, tmp_path):
        write_concept_embeddings(tmp_path / "emb.sseb")
        rc = run_cli(
            "build-subspace", "--embeddings", tmp_path / "emb.sseb",
            "--select", "sot", "--out", tmp_path / "s.sses",
        )
        assert rc == 2

    def test_missing_sidecar_is_format_error(self, tmp_path, rng):
        formats.write_embeddings(rng.standard_normal((10, 8)), None, tmp_path / "bare.sseb")
        rc = run_cli("build-subspace", "--embeddings", tmp_path / "bare.sseb", "--out", tmp_path / "s.sses")
        assert rc == 3

    def test_missing_file_is_io_error(self, tmp_path):
        rc = run_cli("build-subspace", "--embeddings", tmp_path / "nope.sseb", "--out", tmp_path / "s.sses")
        assert rc == 3


class TestSuppress:
    def test_writes_tokens_and_mse_report(self, workdir):
        rc = run_cli(
            "suppress", "--subspace", workdir / "sub.sses", "--condition", workdir / "cond.sseb",
            "--out", workdir / "sup.sseb", "--report", workdir / "rep.json",
        )
        assert rc == 0
        report = json.loads((workdir / "rep.json").read_text())
        assert [r["row"] for r in report] == list(range(6))
        assert [r["kind"] for r in report] == ["sot", "word", "word", "word", "word", "eot"]
        orig, _ = formats.read_embeddings(workdir / "cond.sseb")
        sup, _ = formats.read_embeddings(workdir / "sup.sseb")
        recomputed = np.mean((orig - sup) ** 2, axis=1)
        np.testing.assert_allclose([r["mse"] for r in report], recomputed, atol=1e-5)

    def test_matches_library_pipeline_bit_exactly(self, workdir):
        run_cli(
            "suppress", "--subspace", workdir / "sub.sses", "--condition", workdir / "cond.sseb",
            "--out", workdir / "sup.sseb", "--report", workdir / "rep.json",
        )
        s = formats.read_subspace(workdir / "sub.sses")
        matrix, _ = formats.read_embeddings(workdir / "cond.sseb")
        roles = ("sot",) + ("word",) * 4 + ("eot",)
        result = suppress.suppress_condition(
            suppress.ConditionTokens(tokens=matrix, roles=roles), s, suppress.SuppressionConfig(k=s.k)
        )
        formats.write_embeddings(result.tokens, None, workdir / "lib.sseb")
        assert (workdir / "lib.sseb").read_bytes() == (workdir / "sup.sseb").read_bytes()

    def test_skip_sot_copies_first_row(self, workdir):
        rc = run_cli(
            "suppress", "--subspace", workdir / "sub.sses", "--condition", workdir / "cond.sseb",
            "--skip-sot", "--out", workdir / "sup.sseb", "--report", workdir / "rep.json",
        )
        assert rc == 0
        orig, _ = formats.read_embeddings(workdir / "cond.sseb")
        sup, _ = formats.read_embeddings(workdir / "sup.sseb")
        np.testing.assert_array_equal(sup[0], orig[0])
        assert json.loads((workdir / "rep.json").read_text())[0]["mse"] == 0.0

    def test_deterministic_across_runs(self, workdir):
        for name in ("one", "two"):
            run_cli(
                "suppress", "--subspace", workdir / "sub.sses", "--condition", workdir / "cond.sseb",
                "--out", workdir / f"{name}.sseb", "--report", workdir / f"{name}.json",
            )
        assert (workdir / "one.sseb").read_bytes() == (workdir / "two.sseb").read_bytes()
        assert (workdir / "one.json").read_text() == (workdir / "two.json").read_text()

    def test_dimension_mismatch_is_format_error(self, workdir):
        write_condition(workdir / "narrow.sseb", d_c=16)
        rc = run_cli(
            "suppress", "--subspace", workdir / "sub.sses", "--condition", workdir / "narrow.sseb",
            "--out", workdir / "x.sseb", "--report", workdir / "x.json",
        )
        assert rc == 3


class TestOptimize:
    def optimize(self, workdir, *extra):
        run_cli(
            "suppress", "--subspace", workdir / "sub.sses", "--condition", workdir / "cond.sseb",
            "--out", workdir / "sup.sseb", "--report", workdir / "rep.json",
        )
        return run_cli(
            "optimize", "--subspace", workdir / "sub.sses", "--original", workdir / "cond.sseb",
            "--suppressed", workdir / "sup.sseb", "--out", workdir / "opt.sseb",
            "--trace", workdir / "trace.json", *extra,
        )

    def test_trace_shows_descent_and_freeze(self, workdir):
        assert self.optimize(workdir) == 0
        steps = json.loads((workdir / "trace.json").read_text())["steps"]
        assert [s["t"] for s in steps] == list(range(30, 50))
        for s in steps:
            assert s["loss_after"] <= s["loss_before"] + 1e-12
            assert s["max_subspace_drift"] <= 1e-8
        out, _ = formats.read_embeddings(workdir / "opt.sseb")
        assert out.shape == (6, 32)

    def test_deterministic_for_fixed_seed(self, workdir):
        self.optimize(workdir)
        first = (workdir / "opt.sseb").read_bytes(), (workdir / "trace.json").read_text()
        self.optimize(workdir)
        assert ((workdir / "opt.sseb").read_bytes(), (workdir / "trace.json").read_text()) == first

    def test_inverted_window_is_usage_error(self, workdir):
        assert self.optimize(workdir, "--t-start", 40, "--t-end", 10) == 2

    def test_divergent_learning_rate_is_numerical_error(self, workdir):
        with np.errstate(over="ignore"):
            rc = self.optimize(workdir, "--lr", 1e6, "--t-start", 0, "--t-end", 50)
        assert rc == 4

    def test_shape_mismatch_is_format_error(self, workdir):
        write_condition(workdir / "short.sseb", n_tokens=3)
        run_cli(
            "suppress", "--subspace", workdir / "sub.sses", "--condition", workdir / "cond.sseb",
            "--out", workdir / "sup.sseb", "--report", workdir / "rep.json",
        )
        rc = run_cli(
            "optimize", "--subspace", workdir / "sub.sses", "--original", workdir / "short.sseb",
            "--suppressed", workdir / "sup.sseb", "--out", workdir / "x.sseb", "--trace", workdir / "t.json",
        )
        assert rc == 3


class TestPerturb:
    def test_default_treats_last_row_as_appended(self, workdir):
        rc = run_cli("perturb", "--embeddings", workdir / "emb.sseb", "--k", 5, "--out", workdir / "p.json")
        assert rc == 0
        payload = json.loads((workdir / "p.json").read_text())
        assert set(payload) == {
            "delta_norm", "gap_singular", "gap_eigen", "bound",
            "angles_deg", "mean_angle_deg", "sin_theta",
        }
        assert len(payload["angles_deg"]) == 5

    def test_trial_mode_payload(self, workdir):
        rc = run_cli(
            "perturb", "--embeddings", workdir / "emb.sseb", "--k", 5,
            "--trials", 3, "--seed", 11, "--out", workdir / "p.json",
        )
        assert rc == 0
        payload = json.loads((workdir / "p.json").read_text())
        assert payload["trials"] == 3 and payload["seed"] == 11
        assert len(payload["reports"]) == 4
        control = payload["reports"][0]
        assert control["delta_norm"] == 0.0 and control["bound"] == 0.0
        assert payload["max_angle_deg"] >= payload["reports"][1]["mean_angle_deg"] >= 0.0

    def test_degenerate_spectrum_writes_inf_sentinel(self, tmp_path):
        # Exact integer diagonal survives the f32 file boundary, so the
        # sigma_2 = sigma_3 degeneracy reaches the reader intact.
        a = np.zeros((8, 4))
        a[0, 0], a[1, 1], a[2, 2], a[3, 3] = 5.0, 3.0, 3.0, 1.0
        formats.write_embeddings(np.vstack([a, np.zeros(4)]), None, tmp_path / "deg.sseb")
        with pytest.warns(UserWarning, match="degenerate"):
            rc = run_cli("perturb", "--embeddings", tmp_path / "deg.sseb", "--k", 2, "--out", tmp_path / "p.json")
        assert rc == 0
        assert json.loads((tmp_path / "p.json").read_text())["bound"] == "+inf"

    def test_rank_bounds_and_trials_validated(self, workdir):
        assert run_cli("perturb", "--embeddings", workdir / "emb.sseb", "--k", 32, "--out", workdir / "p.json") == 2
        assert run_cli("perturb", "--embeddings", workdir / "emb.sseb", "--trials", 0, "--out", workdir / "p.json") == 2


class TestVerify:
    def test_all_properties_hold(self, capsys):
        assert run_cli("verify") == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        lines = [ln for ln in out.splitlines() if ln.startswith("PASS")]
        assert len(lines) >= 10
        assert "properties hold" in out

    def test_injected_fault_fails_the_suite(self, capsys):
        assert run_cli("verify", "--inject-fault", "broken-projector") == 1
        out = capsys.readouterr().out
        assert "FAIL  projector-algebra" in out


class TestConsoleScript:
    def test_help_runs_from_the_installed_entrypoint(self):
        exe = shutil.which("semerase")
        assert exe is not None, "console script not installed"
        done = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert done.returncode == 0
        assert "build-subspace" in done.stdout

    def test_missing_subcommand_exits_2(self):
        done = subprocess.run([shutil.which("semerase")], capture_output=True, text=True)
        assert done.returncode == 2


class TestRoleDerivation:
    def test_positional_default_roles(self):
        assert cli._roles_for(None, 1) == ("word",)
        assert cli._roles_for(None, 4) == ("sot", "word", "word", "eot")

    def test_sidecar_kinds_override_positions(self):
        meta = formats.EmbeddingMetadata(
            sentences=(),
            tokens=(
                formats.TokenAnnotation(row=0, sentence_id=0, position=0, text="<sot>", kind="sot"),
                formats.TokenAnnotation(row=1, sentence_id=0, position=1, text="dog", kind="target"),
                formats.TokenAnnotation(row=2, sentence_id=0, position=2, text="x", kind="other"),
                formats.TokenAnnotation(row=3, sentence_id=0, position=3, text="<eot>", kind="eot"),
            ),
        )
        assert cli._roles_for(meta, 4) == ("sot", "word", "word", "eot")
