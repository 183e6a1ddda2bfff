import math

import numpy as np
import pytest

from concept_retrieval.embedding_store import SimilarityStats, normalize_rows
from concept_retrieval.neighborhood import cosine_similarity, find_neighborhood, pairwise_similarity_matrix

from conftest import make_ds


class TestCosine:
    def test_self(self):
        v = np.array([0.3, -2.0, 5.0])
        assert cosine_similarity(v, v) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_diagonal(self):
        assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(0.70710678, abs=1e-8)

    def test_zero_norm(self):
        with pytest.raises(ValueError):
            cosine_similarity([0, 0], [1, 0])

    def test_scale_invariant_and_symmetric(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((2, 7))
        assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(3.5 * b, a), abs=1e-12)


def _random_ds(n=300, d=8, seed=0):
    return normalize_rows(make_ds(np.random.default_rng(seed).standard_normal((n, d))))


class TestNeighborhood:
    def test_threshold_below_range_takes_everything(self):
        ds = _random_ds()
        nbr = find_neighborhood(ds, 3, SimilarityStats(mu=-1.0, sigma=0.0, sample_pairs=1000), z=0.0,
                                min_neighborhood=1)
        assert len(nbr) == ds.n - 1
        assert 3 not in nbr.member_indices
        assert not nbr.fallback

    def test_threshold_above_range_falls_back(self):
        ds = _random_ds()
        nbr = find_neighborhood(ds, 0, SimilarityStats(mu=0.0, sigma=1.0, sample_pairs=1000), z=5.0,
                                min_neighborhood=50)
        assert nbr.fallback and len(nbr) == 50
        sims = ds.vectors @ ds.vectors[0]
        sims[0] = -np.inf
        top = np.sort(np.argsort(-sims, kind="stable")[:50])
        np.testing.assert_array_equal(nbr.member_indices, top)

    def test_members_exactly_above_threshold(self):
        ds = _random_ds()
        stats = SimilarityStats(mu=0.0, sigma=0.3, sample_pairs=1000)
        nbr = find_neighborhood(ds, 7, stats, z=0.25, min_neighborhood=5)
        sims = np.array([cosine_similarity(ds.vectors[7], v) for v in ds.vectors])
        expected = [i for i in range(ds.n) if i != 7 and sims[i] >= 0.075]
        np.testing.assert_array_equal(nbr.member_indices, expected)
        np.testing.assert_allclose(nbr.similarities, sims[expected], atol=1e-9)
        assert nbr.threshold == pytest.approx(0.075)
        assert np.all(np.diff(nbr.member_indices) > 0)

    def test_larger_z_never_grows(self):
        ds = _random_ds(seed=1)
        stats = SimilarityStats(mu=0.0, sigma=0.35, sample_pairs=1000)
        sizes = [len(find_neighborhood(ds, 0, stats, z=z, min_neighborhood=1)) for z in (-1, 0, 0.25, 1, 2)]
        assert sizes == sorted(sizes, reverse=True)

    def test_planted_covers_query_clusters(self, small_planted):
        ds, truth, stats = small_planted
        q = next(i for i, lab in enumerate(truth.labels) if len(lab) == 2)
        nbr = find_neighborhood(ds, q, stats)
        members = set(nbr.member_indices.tolist())
        for c in truth.labels[q]:
            owners = set(truth.members_of(c).tolist()) - {q}
            assert len(owners & members) >= 0.9 * len(owners)

    def test_bad_query(self):
        ds = _random_ds()
        with pytest.raises(IndexError):
            find_neighborhood(ds, ds.n, SimilarityStats(0.0, 0.1, 1000))


class TestPairwise:
    def test_identical_rows(self):
        ds = normalize_rows(make_ds([[1.0, 1.0], [2.0, 2.0], [0.0, 1.0]]))
        np.testing.assert_allclose(pairwise_similarity_matrix(ds, [0, 1]), [[1, 1], [1, 1]])

    def test_orthonormal_rows(self):
        ds = make_ds(np.eye(4), normalized=True)
        np.testing.assert_allclose(pairwise_similarity_matrix(ds, [0, 1, 2, 3]), np.eye(4), atol=1e-12)

    def test_matches_elementwise(self):
        ds = _random_ds(seed=2)
        idx = [5, 17, 40, 41, 299]
        m = pairwise_similarity_matrix(ds, idx)
        for a, i in enumerate(idx):
            for b, j in enumerate(idx):
                assert m[a, b] == pytest.approx(cosine_similarity(ds.vectors[i], ds.vectors[j]), abs=1e-9)
        assert np.abs(m - m.T).max() <= 1e-9
        assert math.isclose(m[0, 0], 1.0)
