"""Scores for extracted concepts, and the two comparison baselines.

Per concept: relevance (RS), consistency (CS), inner diversity (IDS) and
the minimum cross diversity to the other concepts (concCDS). The image-level
scores are plain means over the concepts of one query.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ExtractionConfig
from .embedding_store import EmbeddingDataset
from .errors import DegenerateDistributionError, PoolTooSmallError
from .neighborhood import _check_index, similarities_to

MIN_POOL = 30
MIN_SIGMA = 1e-6


@dataclass(frozen=True)
class MetricsConfig:
    """``pool_images=None`` pools concepts from every image in the dataset."""

    ids_k: int = 5
    pool_images: int | None = 100
    pool_seed: int = 0
    baseline_total: int = 60
    baseline_sets: int = 3
    kmeans_restarts: int = 10
    kmeans_tol: float = 1e-6
    kmeans_max_iter: int = 300

    def __post_init__(self):
        if self.ids_k < 1:
            raise ValueError("ids_k must be >= 1")
        if self.pool_images is not None and self.pool_images < 1:
            raise ValueError("pool_images must be >= 1")
        if self.baseline_total < 1 or self.baseline_sets < 1:
            raise ValueError("baseline sizes must be >= 1")
        if self.kmeans_restarts < 1 or self.kmeans_max_iter < 1:
            raise ValueError("kmeans_restarts and kmeans_max_iter must be >= 1")


@dataclass(frozen=True)
class ConceptDistribution:
    mu: float
    sigma: float
    pool_size: int

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        if self.pool_size < MIN_POOL:
            raise PoolTooSmallError(f"concept pool has {self.pool_size} entries, need >= {MIN_POOL}")


@dataclass(frozen=True)
class ConceptScores:
    rs: float
    cs: float
    ids: float | None          # None when the set is too small for K components
    conc_cds: float | None     # None for a lone concept


@dataclass(frozen=True)
class ImageScores:
    im_rs: float
    im_cs: float
    im_ids: float | None
    im_cds: float | None


@dataclass(frozen=True)
class MetricsReport:
    per_concept: tuple
    image_level: ImageScores
    K: int
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "flags": list(self.flags),
            "image_level": _scores_dict(self.image_level),
            "per_concept": [_scores_dict(c) for c in self.per_concept],
        }


def _scores_dict(s) -> dict:
    return {k: (None if v is None else float(v)) for k, v in s.__dict__.items()}


def _cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


# -- concept distribution ---------------------------------------------------

def build_concept_pool(ds: EmbeddingDataset, config: ExtractionConfig = ExtractionConfig(),
                       pool_images: int | None = 100, seed: int = 0, stats=None) -> np.ndarray:
    """Concept embeddings extracted from ``pool_images`` seeded random rows
    (every row when ``None``). Returns a (p, d) array."""
    from .extractor import extract_concepts
    from .embedding_store import estimate_similarity_stats

    if pool_images is None or pool_images >= ds.n:
        rows = np.arange(ds.n)
    else:
        rows = np.sort(np.random.default_rng(seed).choice(ds.n, size=pool_images, replace=False))
    if stats is None:
        stats = estimate_similarity_stats(ds, config.stats_sample_pairs, config.seed)
    vectors = []
    for i in rows:
        vectors.extend(c.concept_embedding.vector for c in extract_concepts(ds, int(i), config, stats).concepts)
    return np.array(vectors).reshape(-1, ds.d)


def build_concept_distribution(ds: EmbeddingDataset, query_index: int, pool) -> ConceptDistribution:
    """Mean and spread of ``Sim(query, e_c)`` over the pooled concept embeddings."""
    query_index = _check_index(ds, query_index)
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2 or len(pool) < MIN_POOL:
        raise PoolTooSmallError(f"concept pool has {len(pool) if pool.ndim == 2 else 0} entries, "
                                f"need >= {MIN_POOL}")
    q = ds.vectors[query_index]
    norms = np.linalg.norm(pool, axis=1)
    live = norms > 0
    sims = np.zeros(len(pool))
    sims[live] = np.clip(pool[live] @ q / (norms[live] * np.linalg.norm(q)), -1.0, 1.0)
    # a spread below MIN_SIGMA is reported as is; relevance_score refuses it
    sigma = float(sims.std())
    return ConceptDistribution(mu=float(sims.mean()), sigma=sigma, pool_size=len(pool))


# -- the four scores --------------------------------------------------------

def relevance_score(query, ec, dist: ConceptDistribution) -> float:
    """``Phi((Sim(query, e_c) - mu) / sigma)``. ``ec`` may be a vector or a ConceptEmbedding."""
    if dist.sigma < MIN_SIGMA:
        raise DegenerateDistributionError("distribution sigma below 1e-6")
    vec = getattr(ec, "vector", ec)
    return normal_cdf((_cosine(query, vec) - dist.mu) / dist.sigma)


def consistency_score(retrieved) -> float:
    """Norm of the mean of unit-norm rows."""
    x = np.atleast_2d(np.asarray(retrieved, dtype=np.float64))
    if len(x) < 1:
        raise ValueError("need at least one row")
    return float(min(np.linalg.norm(x.mean(0)), 1.0))


def inner_diversity(retrieved, K: int = 5):
    """``(score, degenerate)``: share of centered variance in the top ``K``
    principal components; identical rows give ``(0.0, True)``."""
    x = np.atleast_2d(np.asarray(retrieved, dtype=np.float64))
    if K < 1:
        raise ValueError("K must be >= 1")
    if len(x) < K + 1:
        raise ValueError(f"need at least K+1={K + 1} rows, got {len(x)}")
    s = np.linalg.svd(x - x.mean(0), compute_uv=False)
    ev = s * s
    total = ev.sum()
    if total <= 1e-24 * max(1.0, float((x * x).sum())):
        return 0.0, True
    return float(min(ev[:K].sum() / total, 1.0)), False


def inner_diversity_score(retrieved, K: int = 5) -> float:
    return inner_diversity(retrieved, K)[0]


def cds(a, b) -> float:
    return 0.5 * (1.0 - _cosine(a, b))


@dataclass(frozen=True)
class CrossDiversity:
    pairwise: np.ndarray
    conc_cds: tuple             # per concept; None entries when absent
    im_cds: float | None
    absent: bool = False


def cross_diversity(concepts) -> CrossDiversity:
    """Pairwise CDS, per-concept minimum to the others, and their mean."""
    vecs = [np.asarray(getattr(c, "vector", c), dtype=np.float64) for c in concepts]
    n = len(vecs)
    pair = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            pair[i, j] = pair[j, i] = cds(vecs[i], vecs[j])
    if n < 2:
        return CrossDiversity(pair, (None,) * n, None, absent=True)
    conc = tuple(float(np.min(np.delete(pair[i], i))) for i in range(n))
    return CrossDiversity(pair, conc, float(np.mean(conc)))


def evaluate_concepts(ds: EmbeddingDataset, query_index: int, concept_vectors, retrieved_sets,
                      dist: ConceptDistribution, K: int = 5) -> MetricsReport:
    """Score one query's concepts; ``retrieved_sets`` holds row indices into ``ds``."""
    query_index = _check_index(ds, query_index)
    concept_vectors = list(concept_vectors)
    retrieved_sets = [np.asarray(r, dtype=int) for r in retrieved_sets]
    if not concept_vectors:
        raise ValueError("no concepts to evaluate")
    if len(concept_vectors) != len(retrieved_sets):
        raise ValueError("one retrieved set per concept is required")
    q = ds.vectors[query_index]
    cross = cross_diversity(concept_vectors)
    flags = []
    if cross.absent:
        flags.append("cds_absent")
    scores = []
    for i, (vec, rows) in enumerate(zip(concept_vectors, retrieved_sets)):
        x = ds.vectors[rows]
        x = x / np.linalg.norm(x, axis=1, keepdims=True)
        ids = None
        if len(x) >= K + 1:
            ids, degenerate = inner_diversity(x, K)
            if degenerate:
                flags.append(f"ids_degenerate:{i}")
        else:
            flags.append(f"ids_too_few_rows:{i}")
        scores.append(ConceptScores(rs=relevance_score(q, vec, dist), cs=consistency_score(x),
                                    ids=ids, conc_cds=cross.conc_cds[i]))
    defined_ids = [s.ids for s in scores if s.ids is not None]
    image = ImageScores(im_rs=float(np.mean([s.rs for s in scores])),
                        im_cs=float(np.mean([s.cs for s in scores])),
                        im_ids=float(np.mean(defined_ids)) if defined_ids else None,
                        im_cds=cross.im_cds)
    return MetricsReport(per_concept=tuple(scores), image_level=image, K=K, flags=tuple(flags))


def evaluate_result(ds: EmbeddingDataset, result, dist: ConceptDistribution, K: int = 5) -> MetricsReport:
    """Score an ``ExtractionResult``."""
    return evaluate_concepts(ds, result.query_index, [c.concept_embedding.vector for c in result.concepts],
                             [c.retrieved.indices for c in result.concepts], dist, K)


# -- baselines --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BaselineSets:
    sets: tuple                 # row-index arrays
    concept_vectors: np.ndarray # (len(sets), d)
    shrunk: bool = False
    pool: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _top_neighbors(ds: EmbeddingDataset, query_index: int, total: int):
    sims = similarities_to(ds, ds.vectors[query_index])
    sims[query_index] = np.nan
    idx = np.flatnonzero(~np.isnan(sims))
    order = np.lexsort((idx, -sims[idx]))
    take = min(total, len(idx))
    return idx[order[:take]], take < total


def baseline_retrieval(ds: EmbeddingDataset, query_index: int, total_n: int = 60, sets: int = 3) -> BaselineSets:
    """Top ``total_n`` rows by similarity, split in rank order into ``sets``
    consecutive groups; each group's concept embedding is its mean row."""
    query_index = _check_index(ds, query_index)
    top, shrunk = _top_neighbors(ds, query_index, total_n)
    if len(top) < sets:
        raise ValueError(f"only {len(top)} candidate rows for {sets} sets")
    groups = tuple(np.array_split(top, sets))
    vecs = np.array([ds.vectors[g].mean(0) for g in groups])
    return BaselineSets(sets=groups, concept_vectors=vecs, shrunk=shrunk, pool=top)


def _kmeans_pp(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    d2 = ((x - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        i = rng.choice(len(x), p=d2 / total) if total > 0 else rng.integers(len(x))
        centers.append(x[i])
        d2 = np.minimum(d2, ((x - x[i]) ** 2).sum(1))
    return np.array(centers)


def _assign(x, centers):
    d2 = (x * x).sum(1)[:, None] - 2.0 * x @ centers.T + (centers * centers).sum(1)[None, :]
    return np.argmin(d2, axis=1), np.maximum(d2, 0.0)


def kmeans(x, k: int, seed: int = 0, restarts: int = 10, tol: float = 1e-6, max_iter: int = 300):
    """Lloyd's algorithm from k-means++ starts; best of ``restarts`` by inertia.

    Stops when no centroid moves more than ``tol``. A cluster that empties
    is re-seeded at the point farthest from its current centroid.
    Returns ``(labels, centers, inertia)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if not 1 <= k <= len(x):
        raise ValueError(f"k={k} must lie in [1, {len(x)}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        centers = _kmeans_pp(x, k, rng)
        for _ in range(max_iter):
            labels, d2 = _assign(x, centers)
            own = d2[np.arange(len(x)), labels]
            new = centers.copy()
            for j in range(k):
                members = labels == j
                if members.any():
                    new[j] = x[members].mean(0)
                else:
                    far = int(np.argmax(own))
                    new[j] = x[far]
                    own[far] = -1.0          # one point re-seeds at most one cluster
            shift = np.sqrt(((new - centers) ** 2).sum(1)).max()
            centers = new
            if shift <= tol:
                break
        labels, d2 = _assign(x, centers)
        inertia = float(d2[np.arange(len(x)), labels].sum())
        if best is None or inertia < best[2] - 1e-12:
            best = (labels, centers, inertia)
    return best


def baseline_kmeans(ds: EmbeddingDataset, query_index: int, k: int = 3, pool_n: int = 60, seed: int = 0,
                    restarts: int = 10, tol: float = 1e-6, max_iter: int = 300) -> BaselineSets:
    """k-means over the query's top ``pool_n`` neighbors; sets are ordered by
    the rank of their best-ranked member and embedded as unit centroids."""
    query_index = _check_index(ds, query_index)
    top, shrunk = _top_neighbors(ds, query_index, pool_n)
    x = ds.vectors[top]
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    labels, centers, _ = kmeans(x, min(k, len(top)), seed, restarts, tol, max_iter)
    order = sorted({int(l) for l in labels}, key=lambda j: int(np.argmax(labels == j)))
    groups = tuple(top[labels == j] for j in order)
    vecs = []
    for j in order:
        c = centers[j]
        n = np.linalg.norm(c)
        vecs.append(c / n if n > 0 else c)
    return BaselineSets(sets=groups, concept_vectors=np.array(vecs), shrunk=shrunk, pool=top)


def evaluate_baseline(ds: EmbeddingDataset, query_index: int, baseline: BaselineSets,
                      dist: ConceptDistribution, K: int = 5) -> MetricsReport:
    return evaluate_concepts(ds, query_index, baseline.concept_vectors, baseline.sets, dist, K)
