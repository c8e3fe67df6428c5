"""Concept-matrix assembly and subspace extraction."""

import numpy as np
import pytest
import scipy.linalg

from semerase import concept, fixtures, linalg
from semerase.errors import DegenerateConcept, DimensionMismatch, EmptySelection, RankOutOfBounds
from semerase.perturb import principal_sin_theta


def record(vec, kind="target", i=0):
    return concept.TokenRecord(embedding=np.asarray(vec, float), sentence_id=0, position=i, text=f"w{i}", kind=kind)


class TestAssembly:
    def test_rows_stack_in_input_order(self):
        recs = [record([1.0, 0.0], i=0), record([0.0, 1.0], i=1), record([2.0, 2.0], i=2)]
        m = concept.assemble_concept_matrix(recs, selection={"target"})
        np.testing.assert_array_equal(m.matrix, [[1, 0], [0, 1], [2, 2]])
        assert [r.position for r in m.provenance] == [0, 1, 2]

    def test_selection_filters_kinds(self):
        recs = [
            record([1.0, 0.0], kind="target", i=0),
            record([0.0, 1.0], kind="eot", i=1),
            record([9.0, 9.0], kind="other", i=2),
        ]
        m = concept.assemble_concept_matrix(recs, selection={"target", "eot"})
        assert m.n_rows == 2
        assert all(r.kind in ("target", "eot") for r in m.provenance)

    def test_default_selection_is_target_and_eot(self):
        recs = [record([1.0, 1.0], kind=k, i=i) for i, k in enumerate(["target", "eot", "sot", "other"])]
        m = concept.assemble_concept_matrix(recs)
        assert m.n_rows == 2

    def test_empty_selection_raises(self):
        with pytest.raises(EmptySelection):
            concept.assemble_concept_matrix([record([1.0, 0.0], kind="other")], selection={"target"})

    def test_mixed_dimensions_raise(self):
        with pytest.raises(DimensionMismatch):
            concept.assemble_concept_matrix([record([1.0, 0.0], i=0), record([1.0, 0.0, 0.0], i=1)])

    def test_unknown_kind_rejected_at_record_construction(self):
        with pytest.raises(ValueError):
            record([1.0], kind="banana")


class TestSubspace:
    def test_repeated_unit_row_gives_that_basis_vector(self):
        w = np.array([0.6, 0.0, 0.8])
        recs = [record(w, i=i) for i in range(9)]
        s = concept.build_semantic_subspace(concept.assemble_concept_matrix(recs), 1)
        assert s.sigma[0] == pytest.approx(3.0, rel=1e-12)  # sqrt(N) * ||w||
        np.testing.assert_allclose(np.abs(s.basis.vectors[:, 0]), np.abs(w), atol=1e-12)

    def test_span_matches_gram_eigenvector_oracle(self):
        rng = np.random.default_rng(42)
        m = rng.standard_normal((50, 16))
        recs = [record(row, i=i) for i, row in enumerate(m)]
        s = concept.build_semantic_subspace(concept.assemble_concept_matrix(recs), 5)
        eigvals, eigvecs = scipy.linalg.eigh(m.T @ m)
        oracle = eigvecs[:, ::-1][:, :5]
        assert principal_sin_theta(oracle, s.basis.vectors) <= 1e-6

    def test_semantic_matrix_matches_truncated_reconstruction(self):
        m, s = fixtures.concept_fixture(n_rows=40, d_c=16, k=4)
        expected = linalg.truncate_reconstruct(linalg.svd(m.matrix), 4)
        np.testing.assert_allclose(s.semantic_matrix(), expected, atol=1e-10)

    def test_semantic_matrix_has_exact_rank_k(self, planted_subspace):
        sv = np.linalg.svd(planted_subspace.semantic_matrix(), compute_uv=False)
        assert sv[planted_subspace.k] <= 1e-10 * sv[0]

    def test_semantic_rows_live_in_basis_span(self, planted_subspace):
        shat = planted_subspace.semantic_matrix()
        for i in range(0, shat.shape[0], 17):
            assert linalg.residual_energy(shat[i], planted_subspace.basis) >= 1.0 - 1e-10

    def test_row_permutation_leaves_span_unchanged(self, planted_matrix, planted_subspace):
        rng = np.random.default_rng(8)
        perm = rng.permutation(planted_matrix.n_rows)
        m2 = concept.ConceptTokenMatrix(
            matrix=planted_matrix.matrix[perm],
            provenance=tuple(planted_matrix.provenance[i] for i in perm),
        )
        s2 = concept.build_semantic_subspace(m2, planted_subspace.k)
        assert principal_sin_theta(planted_subspace.basis.vectors, s2.basis.vectors) <= 1e-8

    def test_centering_subtracts_column_mean(self):
        rng = np.random.default_rng(9)
        m = rng.standard_normal((30, 6)) + 100.0
        recs = [record(row, i=i) for i, row in enumerate(m)]
        cm = concept.assemble_concept_matrix(recs)
        s = concept.build_semantic_subspace(cm, 2, center=True)
        expected = linalg.svd(m - m.mean(axis=0))
        np.testing.assert_allclose(s.sigma, expected.sigma[:2], rtol=1e-12)

    @pytest.mark.parametrize("k", [0, 33, 201])
    def test_rank_out_of_bounds(self, planted_matrix, k):
        with pytest.raises(RankOutOfBounds):
            concept.build_semantic_subspace(planted_matrix, k)

    def test_rank_deficient_matrix_degenerate_beyond_its_rank(self):
        # Rank-2 stack: requesting k=3 must fail the sigma_k floor.
        rows = [record([1.0, 0.0, 0.0, 0.0], i=0), record([0.0, 1.0, 0.0, 0.0], i=1),
                record([1.0, 1.0, 0.0, 0.0], i=2), record([2.0, -1.0, 0.0, 0.0], i=3)]
        m = concept.assemble_concept_matrix(rows)
        with pytest.raises(DegenerateConcept):
            concept.build_semantic_subspace(m, 3)
