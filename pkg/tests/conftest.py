import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from concept_retrieval import EmbeddingDataset, PlantedSpec, estimate_similarity_stats, generate_planted

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def make_ds(vectors, normalized=False, ids=None):
    vectors = np.asarray(vectors, dtype=float)
    if normalized:
        vectors = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    if ids is None:
        ids = [str(i) for i in range(len(vectors))]
    return EmbeddingDataset(ids=ids, vectors=vectors, normalized=normalized)


@pytest.fixture(scope="session")
def planted():
    """The recovery fixture: n=5000, d=64, g=10, 1-3 concepts per image, seed 7."""
    ds, truth = generate_planted(PlantedSpec(n=5000, d=64, g=10, concepts_per_image=(1, 3),
                                             noise_sigma=0.15, seed=7))
    return ds, truth, estimate_similarity_stats(ds)


@pytest.fixture(scope="session")
def small_planted():
    ds, truth = generate_planted(PlantedSpec(n=1500, d=32, g=6, concepts_per_image=(1, 2),
                                             noise_sigma=0.1, seed=3))
    return ds, truth, estimate_similarity_stats(ds)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
