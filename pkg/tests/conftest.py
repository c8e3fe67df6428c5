import numpy as np
import pytest

from semerase import concept, fixtures


@pytest.fixture(scope="session")
def planted_subspace():
    """Rank-5 subspace of the 200 x 32 planted concept fixture."""
    _, s = fixtures.concept_fixture()
    return s


@pytest.fixture(scope="session")
def planted_matrix():
    m, _ = fixtures.concept_fixture()
    return m


def small_subspace(d_c=16, n_rows=12, k=3, seed=5):
    """Tiny subspace for hand-checkable cases."""
    spectrum = fixtures.planted_spectrum(k=k, tail=min(4, min(n_rows, d_c) - k))
    matrix = fixtures.make_planted_matrix(n_rows, d_c, spectrum, seed=seed)
    records = [
        concept.TokenRecord(embedding=row, sentence_id=0, position=i, text=f"t{i}", kind="target")
        for i, row in enumerate(matrix)
    ]
    return concept.build_semantic_subspace(concept.assemble_concept_matrix(records), k)


@pytest.fixture()
def tiny_subspace():
    return small_subspace()


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
