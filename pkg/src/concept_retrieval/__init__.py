"""Multi-concept retrieval over precomputed image embeddings.

Given an embedding matrix and a query row, the extractor finds several
distinct concepts the query shares with parts of the dataset, retrieves
images for each, and the metrics module scores the result.
"""

from .concept_subspace import (
    ConceptEmbedding,
    ConceptSubspace,
    Retrieval,
    fit_concept_subspace,
    navigate_component,
    project_to_concept,
    retrieve_by_concept,
    select_k,
)
from .config import ExtractionConfig
from .embedding_store import (
    EmbeddingDataset,
    SimilarityStats,
    estimate_similarity_stats,
    load_embeddings,
    normalize_rows,
    save_embeddings,
)
from .errors import (
    ConceptRetrievalError,
    DegenerateDistributionError,
    DegenerateFitError,
    DegenerateSubspaceError,
    EmbeddingFormatError,
    InfeasibleSpecError,
    InsufficientSamplesError,
    MalformedHeaderError,
    NoConceptFound,
    NonFiniteValueError,
    PoolTooSmallError,
    RaggedRowsError,
    TooFewRowsError,
    ZeroConceptEmbeddingError,
    ZeroNormRowError,
)
from .extractor import ExtractedConcept, ExtractionResult, Termination, extract_concepts, suppress_concept
from .metrics import (
    ConceptDistribution,
    MetricsConfig,
    MetricsReport,
    baseline_kmeans,
    baseline_retrieval,
    build_concept_distribution,
    build_concept_pool,
    consistency_score,
    cross_diversity,
    evaluate_baseline,
    evaluate_concepts,
    evaluate_result,
    inner_diversity_score,
    relevance_score,
)
from .mixture import EMSettings, Gmm2, assign_components, fit_gmm_1d, membership_probability
from .neighborhood import Neighborhood, cosine_similarity, find_neighborhood
from .surrogate import ConceptSet, SurrogateCandidate, evaluate_candidate, select_surrogate, sep_score
from .synthetic import PlantedSpec, PlantedTruth, generate_planted, score_recovery

__all__ = [
    "ConceptDistribution",
    "ConceptEmbedding",
    "ConceptRetrievalError",
    "ConceptSet",
    "ConceptSubspace",
    "DegenerateDistributionError",
    "DegenerateFitError",
    "DegenerateSubspaceError",
    "EMSettings",
    "EmbeddingDataset",
    "EmbeddingFormatError",
    "ExtractedConcept",
    "ExtractionConfig",
    "ExtractionResult",
    "Gmm2",
    "InfeasibleSpecError",
    "InsufficientSamplesError",
    "MalformedHeaderError",
    "MetricsConfig",
    "MetricsReport",
    "Neighborhood",
    "NoConceptFound",
    "NonFiniteValueError",
    "PlantedSpec",
    "PlantedTruth",
    "PoolTooSmallError",
    "RaggedRowsError",
    "Retrieval",
    "SimilarityStats",
    "SurrogateCandidate",
    "Termination",
    "TooFewRowsError",
    "ZeroConceptEmbeddingError",
    "ZeroNormRowError",
    "assign_components",
    "baseline_kmeans",
    "baseline_retrieval",
    "build_concept_distribution",
    "build_concept_pool",
    "consistency_score",
    "cosine_similarity",
    "cross_diversity",
    "estimate_similarity_stats",
    "evaluate_baseline",
    "evaluate_candidate",
    "evaluate_concepts",
    "evaluate_result",
    "extract_concepts",
    "find_neighborhood",
    "fit_concept_subspace",
    "fit_gmm_1d",
    "generate_planted",
    "inner_diversity_score",
    "load_embeddings",
    "membership_probability",
    "navigate_component",
    "normalize_rows",
    "project_to_concept",
    "relevance_score",
    "retrieve_by_concept",
    "save_embeddings",
    "score_recovery",
    "select_k",
    "select_surrogate",
    "sep_score",
    "suppress_concept",
]

__version__ = "0.1.0"
