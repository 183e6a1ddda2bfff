import numpy as np
import pytest

from concept_retrieval import (
    ExtractionConfig,
    Termination,
    extract_concepts,
    normalize_rows,
    score_recovery,
    suppress_concept,
)
from concept_retrieval.concept_subspace import ConceptSubspace, fit_concept_subspace
from concept_retrieval.neighborhood import find_neighborhood
from concept_retrieval.surrogate import ConceptSet, select_surrogate

from conftest import make_ds


def two_label_query(truth, skip=0):
    return [i for i, lab in enumerate(truth.labels) if len(lab) == 2][skip]


@pytest.fixture(scope="module")
def two_concepts(small_planted):
    ds, truth, stats = small_planted
    q = two_label_query(truth)
    before = ds.vectors.copy()
    result = extract_concepts(ds, q, ExtractionConfig(num_concepts=2), stats)
    return ds, truth, stats, q, before, result


class TestExtract:
    def test_recovers_both_concepts(self, two_concepts):
        _, truth, _, q, _, result = two_concepts
        assert result.termination is Termination.COMPLETED
        score = score_recovery(result, truth)
        assert score.coverage == 1.0
        assert score.mean_purity >= 0.8
        assert set(score.matched) == set(truth.labels[q])

    def test_original_untouched(self, two_concepts):
        ds, _, _, _, before, _ = two_concepts
        assert np.array_equal(ds.vectors, before)

    def test_deterministic(self, two_concepts):
        ds, _, stats, q, _, result = two_concepts
        again = extract_concepts(ds, q, ExtractionConfig(num_concepts=2), stats)
        for a, b in zip(result.concepts, again.concepts):
            np.testing.assert_array_equal(a.retrieved.indices, b.retrieved.indices)
            np.testing.assert_array_equal(a.concept_embedding.vector, b.concept_embedding.vector)

    def test_disjoint_and_distinct(self, two_concepts):
        _, _, _, q, _, result = two_concepts
        a, b = result.concepts
        assert not set(a.retrieved.indices) & set(b.retrieved.indices)
        assert q not in set(a.retrieved.indices) | set(b.retrieved.indices)
        va, vb = a.concept_embedding.vector, b.concept_embedding.vector
        assert va @ vb / np.linalg.norm(va) / np.linalg.norm(vb) < 0.95

    def test_last_concept_not_suppressed(self, two_concepts):
        _, _, _, _, _, result = two_concepts
        assert len(result.concepts[0].suppressed_indices) == int(0.1 * 1500)
        assert len(result.concepts[-1].suppressed_indices) == 0

    def test_single_concept(self, small_planted):
        ds, truth, stats = small_planted
        r = extract_concepts(ds, two_label_query(truth, 1), ExtractionConfig(num_concepts=1), stats)
        assert len(r.concepts) == 1 and r.concepts[0].ordinal == 1
        assert len(r.concepts[0].suppressed_indices) == 0
        assert r.termination is Termination.COMPLETED and r.stop_reason is None

    def test_noise_exhausts(self):
        ds = normalize_rows(make_ds(np.random.default_rng(3).standard_normal((1500, 64))))
        r = extract_concepts(ds, 0)
        assert r.termination is Termination.EXHAUSTED
        assert r.concepts == [] and "surrogate" in r.stop_reason

    def test_identical_rows_exhaust(self):
        ds = normalize_rows(make_ds(np.tile([0.2, 0.4, 0.1, 0.9], (300, 1))))
        r = extract_concepts(ds, 0)
        assert r.termination is Termination.EXHAUSTED and r.concepts == []
        assert "degenerate_fit" in r.stop_reason

    def test_preconditions(self, small_planted):
        ds, _, _ = small_planted
        with pytest.raises(IndexError):
            extract_concepts(ds, ds.n)
        with pytest.raises(ValueError):
            extract_concepts(make_ds(np.random.default_rng(0).standard_normal((50, 4))), 0)

    def test_at_most_num_concepts(self, small_planted):
        ds, truth, stats = small_planted
        r = extract_concepts(ds, two_label_query(truth, 2), ExtractionConfig(num_concepts=4), stats)
        assert len(r.concepts) <= 4
        assert (r.termination is Termination.EXHAUSTED) == (len(r.concepts) < 4)
        assert [c.ordinal for c in r.concepts] == sorted(c.ordinal for c in r.concepts)


@pytest.fixture(scope="module")
def first_concept(small_planted):
    ds, truth, stats = small_planted
    q = two_label_query(truth)
    nbr = find_neighborhood(ds, q, stats)
    cset = select_surrogate(ds, nbr, q, ExtractionConfig(), seed=1)
    sub = fit_concept_subspace(ds.vectors[cset.member_indices], 0.25)
    return ds, truth, stats, q, nbr, cset, sub


class TestSuppress:
    def test_zero_fraction_is_noop(self, first_concept):
        ds, _, _, _, _, cset, sub = first_concept
        sup = suppress_concept(ds, cset, sub, ExtractionConfig(update_fraction=0.0))
        assert sup.skipped and len(sup.indices) == 0
        assert np.array_equal(sup.dataset.vectors, ds.vectors)

    def test_updated_rows_orthogonal(self, first_concept):
        ds, _, _, _, _, cset, sub = first_concept
        sup = suppress_concept(ds, cset, sub, ExtractionConfig())
        assert len(sup.indices) == 150
        after = sup.dataset.vectors[sup.indices]
        orig = ds.vectors[sup.indices]
        proj = np.linalg.norm(after @ sub.basis, axis=1)
        assert np.all(proj <= 1e-6 * np.linalg.norm(orig, axis=1))
        # untouched rows are unchanged and updated rows are not renormalized
        rest = np.setdiff1d(np.arange(ds.n), sup.indices)
        assert np.array_equal(sup.dataset.vectors[rest], ds.vectors[rest])
        assert np.all(np.linalg.norm(after, axis=1) < 1.0)

    def test_updated_rows_best_match_mean(self, first_concept):
        ds, _, _, _, _, cset, sub = first_concept
        sup = suppress_concept(ds, cset, sub, ExtractionConfig())
        mean = ds.vectors[cset.member_indices].mean(0)
        sims = ds.vectors @ mean / np.linalg.norm(mean)
        assert sims[sup.indices].min() >= np.delete(sims, sup.indices).max()

    def test_pure_rows_leave_next_neighborhood(self, first_concept):
        ds, truth, stats, q, nbr, cset, sub = first_concept
        counts = np.bincount([c for i in cset.member_indices for c in truth.labels[i]], minlength=6)
        a = int(np.argmax(counts))
        pure = {i for i, lab in enumerate(truth.labels) if lab == frozenset({a})}
        sup = suppress_concept(ds, cset, sub, ExtractionConfig())
        nxt = find_neighborhood(sup.dataset, q, stats)
        before = len(pure & set(nbr.member_indices))
        after = len(pure & set(nxt.member_indices))
        assert before > 20 and after <= 0.1 * before

    def test_rows_collapsing_to_zero_are_flagged(self):
        x = np.vstack([np.tile([1.0, 0, 0], (5, 1)), np.random.default_rng(0).standard_normal((15, 3))])
        ds = normalize_rows(make_ds(x))
        cset = ConceptSet(surrogate=None, member_indices=np.arange(5), membership_probabilities=np.ones(5))
        sub = ConceptSubspace(basis=np.eye(3)[:, :1], component_variances=np.ones(1), total_variance=1.0,
                              k=1, captured_ratio=1.0)
        sup = suppress_concept(ds, cset, sub, ExtractionConfig(update_fraction=0.25))
        assert set(range(5)) <= set(sup.indices)
        assert sup.dataset.suppressed[:5].all()
        assert not sup.dataset.suppressed[5:].all()
