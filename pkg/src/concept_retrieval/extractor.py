"""The extraction loop: neighborhood, surrogate, subspace, retrieval, suppression."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .concept_subspace import (
    ConceptEmbedding,
    ConceptSubspace,
    Retrieval,
    fit_concept_subspace,
    project_to_concept,
    retrieve_by_concept,
)
from .config import ExtractionConfig
from .embedding_store import ZERO_NORM, EmbeddingDataset, SimilarityStats, estimate_similarity_stats
from .errors import DegenerateSubspaceError, NoConceptFound, ZeroConceptEmbeddingError
from .neighborhood import Neighborhood, _check_index, find_neighborhood, similarities_to
from .surrogate import ConceptSet, select_surrogate

log = logging.getLogger(__name__)

STAGES = ("neighborhood", "surrogate", "subspace", "retrieval", "suppression")


class Termination(str, enum.Enum):
    COMPLETED = "completed"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True, eq=False)
class ExtractedConcept:
    ordinal: int
    concept_set: ConceptSet
    subspace: ConceptSubspace
    concept_embedding: ConceptEmbedding
    retrieved: Retrieval
    suppressed_indices: np.ndarray
    neighborhood: Neighborhood


@dataclass(frozen=True, eq=False)
class ExtractionResult:
    query_index: int
    concepts: list
    stats_used: SimilarityStats
    config: ExtractionConfig
    termination: Termination
    timings: dict = field(default_factory=dict)      # seconds per stage
    stop_reason: str | None = None

    @property
    def concept_vectors(self) -> np.ndarray:
        return np.array([c.concept_embedding.vector for c in self.concepts])


@dataclass(frozen=True)
class Suppression:
    dataset: EmbeddingDataset
    indices: np.ndarray
    skipped: bool = False


def _unit_rows(ds: EmbeddingDataset, idx) -> np.ndarray:
    x = ds.vectors[idx]
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def suppress_concept(working: EmbeddingDataset, concept_set: ConceptSet, subspace: ConceptSubspace,
                     config: ExtractionConfig) -> Suppression:
    """Remove the concept subspace from the rows that best match the concept.

    The rows are the top ``floor(update_fraction * n)`` by cosine similarity
    to the mean of the concept members; each gets ``e - e W W^T``. Rows that
    shrink below 1e-8 are flagged as suppressed. Nothing is renormalized.
    """
    count = int(np.floor(config.update_fraction * working.n))
    if count < 1:
        return Suppression(working, np.zeros(0, dtype=int), skipped=True)
    if subspace.k < 1:
        raise ValueError("concept subspace is empty")
    centroid = _unit_rows(working, concept_set.member_indices).mean(0)
    sims = similarities_to(working, centroid)
    live = np.flatnonzero(~np.isnan(sims))
    order = np.lexsort((live, -sims[live]))
    chosen = np.sort(live[order[:count]])
    vectors = np.array(working.vectors)
    block = vectors[chosen]
    vectors[chosen] = block - (block @ subspace.basis) @ subspace.basis.T
    suppressed = np.array(working.suppressed)
    suppressed[chosen] |= np.linalg.norm(vectors[chosen], axis=1) < ZERO_NORM
    vectors[suppressed] = 0.0
    return Suppression(working.replace_vectors(vectors, suppressed), chosen)


def extract_concepts(ds: EmbeddingDataset, query_index: int, config: ExtractionConfig = ExtractionConfig(),
                     stats: SimilarityStats | None = None) -> ExtractionResult:
    """Extract up to ``config.num_concepts`` concepts for one query row.

    Neighborhoods and surrogates are computed on a private working copy that
    is suppressed after every concept but the last; the concept embedding
    always projects the original query row and retrieval always searches the
    original dataset.
    """
    if not ds.normalized:
        raise ValueError("dataset must be normalized")
    query_index = _check_index(ds, query_index)
    timings = dict.fromkeys(STAGES, 0.0)
    t0 = time.perf_counter()
    if stats is None:
        stats = estimate_similarity_stats(ds, config.stats_sample_pairs, config.seed)
    timings["stats"] = time.perf_counter() - t0

    query = ds.vectors[query_index]
    working = ds
    excluded = {query_index}
    concepts = []
    termination = Termination.COMPLETED
    stop_reason = None
    for ordinal in range(1, config.num_concepts + 1):
        seed = config.seed + ordinal
        q_work = working.vectors[query_index]
        if working.suppressed[query_index] or np.linalg.norm(q_work) < ZERO_NORM:
            termination = Termination.EXHAUSTED
            stop_reason = "query embedding suppressed to zero"
            break

        t = time.perf_counter()
        nbr = find_neighborhood(working, query_index, stats, config.z, config.min_neighborhood)
        timings["neighborhood"] += time.perf_counter() - t

        t = time.perf_counter()
        try:
            cset = select_surrogate(working, nbr, query_index, config, seed)
        except NoConceptFound as exc:
            log.info("query %d: stopping after %d concepts (%s)", query_index, len(concepts), exc)
            termination = Termination.EXHAUSTED
            stop_reason = str(exc)
            timings["surrogate"] += time.perf_counter() - t
            break
        timings["surrogate"] += time.perf_counter() - t

        t = time.perf_counter()
        try:
            subspace = fit_concept_subspace(_unit_rows(working, cset.member_indices), config.tau1)
        except (DegenerateSubspaceError, ValueError) as exc:
            log.info("query %d: concept set unusable (%s)", query_index, exc)
            termination = Termination.EXHAUSTED
            stop_reason = str(exc)
            timings["subspace"] += time.perf_counter() - t
            break
        ec = project_to_concept(query, subspace, source_query=query_index)
        timings["subspace"] += time.perf_counter() - t

        t = time.perf_counter()
        retrieved = None
        try:
            retrieved = retrieve_by_concept(ds, ec, config.retrieve_n,
                                            excluded if config.exclude_retrieved else {query_index})
        except ZeroConceptEmbeddingError:
            log.info("query %d: concept %d projects to zero, skipped", query_index, ordinal)
        timings["retrieval"] += time.perf_counter() - t

        suppressed_idx = np.zeros(0, dtype=int)
        if ordinal < config.num_concepts:
            t = time.perf_counter()
            sup = suppress_concept(working, cset, subspace, config)
            working, suppressed_idx = sup.dataset, sup.indices
            timings["suppression"] += time.perf_counter() - t

        if retrieved is None:
            continue
        excluded.update(int(i) for i in retrieved.indices)
        concepts.append(ExtractedConcept(ordinal=ordinal, concept_set=cset, subspace=subspace,
                                         concept_embedding=ec, retrieved=retrieved,
                                         suppressed_indices=suppressed_idx, neighborhood=nbr))
    timings["total"] = time.perf_counter() - t0
    return ExtractionResult(query_index=query_index, concepts=concepts, stats_used=stats,
                            config=config, termination=termination, timings=timings,
                            stop_reason=stop_reason)
