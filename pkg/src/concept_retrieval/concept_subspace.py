"""PCA concept subspaces, query projection, retrieval and navigation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding_store import EmbeddingDataset
from .errors import DegenerateSubspaceError, ZeroConceptEmbeddingError
from .neighborhood import similarities_to

# slack for comparing a cumulative variance ratio against tau1, so that
# e.g. 2 of 8 equal variances counts as capturing exactly 25%
RATIO_SLACK = 1e-12
NEAR_ZERO = 1e-6


@dataclass(frozen=True, eq=False)
class ConceptSubspace:
    basis: np.ndarray                 # (d, k), orthonormal columns
    component_variances: np.ndarray   # (k,), descending
    total_variance: float
    k: int
    captured_ratio: float
    mean: np.ndarray | None = None    # centroid of the fitted members

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


@dataclass(frozen=True, eq=False)
class ConceptEmbedding:
    vector: np.ndarray
    source_query: int | None
    subspace: ConceptSubspace
    near_zero: bool = False


@dataclass(frozen=True)
class Retrieval:
    indices: np.ndarray
    similarities: np.ndarray
    exhausted: bool = False

    def __len__(self):
        return len(self.indices)


def select_k(variances, tau1: float) -> int:
    """Smallest k whose leading variances reach ``tau1`` of the total."""
    v = np.asarray(variances, dtype=np.float64)
    ratios = np.cumsum(v) / v.sum()
    return int(np.argmax(ratios >= tau1 - RATIO_SLACK)) + 1


def _canonical_signs(basis: np.ndarray) -> np.ndarray:
    pivot = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivot, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def fit_concept_subspace(members, tau1: float = 0.25, center: bool = False) -> ConceptSubspace:
    """Principal directions of the member embeddings (one per row).

    By default the decomposition is taken about the origin, so the shared
    concept direction (the members' common mean) is the leading component;
    ``center=True`` gives classical PCA about the centroid instead. ``k`` is
    the smallest count whose leading variances reach ``tau1`` of the total,
    capped at the numerical rank.
    """
    x = np.asarray(members, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError("need at least 3 member embeddings")
    if not 0.0 < tau1 <= 1.0:
        raise ValueError("tau1 must lie in (0, 1]")
    mean = x.mean(0)
    _, s, vt = np.linalg.svd(x - mean if center else x, full_matrices=False)
    variances = s * s / (x.shape[0] - 1 if center else x.shape[0])
    total = float(variances.sum())
    if s[0] <= 1e-12 * max(1.0, float(np.abs(x).max())):
        raise DegenerateSubspaceError("member embeddings have no principal direction")
    rank = int((s > s[0] * 1e-10).sum())
    k = min(select_k(variances, tau1), rank)
    basis = _canonical_signs(vt[:k].T.copy())
    kept = variances[:k].copy()
    return ConceptSubspace(basis=basis, component_variances=kept, total_variance=total,
                           k=k, captured_ratio=float(kept.sum() / total), mean=mean)


def project_to_concept(query, subspace: ConceptSubspace, source_query: int | None = None) -> ConceptEmbedding:
    """``e_c = e W W^T`` (no centering)."""
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (subspace.basis.shape[0],):
        raise ValueError(f"query has shape {q.shape}, subspace dimension is {subspace.basis.shape[0]}")
    ec = (q @ subspace.basis) @ subspace.basis.T
    scale = max(np.linalg.norm(q), 1.0)
    return ConceptEmbedding(vector=ec, source_query=source_query, subspace=subspace,
                            near_zero=bool(np.linalg.norm(ec) < NEAR_ZERO * scale))


def _retrieve_vector(ds: EmbeddingDataset, vector, n: int, exclude) -> Retrieval:
    if n < 1:
        raise ValueError("n must be >= 1")
    if np.linalg.norm(vector) < NEAR_ZERO:
        raise ZeroConceptEmbeddingError("concept embedding is zero; skip this concept")
    sims = similarities_to(ds, vector)
    allowed = ~np.isnan(sims)
    if exclude is not None and len(exclude):
        allowed[np.asarray(list(exclude), dtype=int)] = False
    idx = np.flatnonzero(allowed)
    if len(idx) == 0:
        return Retrieval(np.zeros(0, dtype=int), np.zeros(0), exhausted=True)
    take = min(n, len(idx))
    s = sims[idx]
    if take < len(idx):
        # everything strictly above the take-th largest value, plus the ties
        cut = np.partition(s, len(s) - take)[len(s) - take]
        pick = s >= cut
        idx, s = idx[pick], s[pick]
    order = np.lexsort((idx, -s))[:take]
    return Retrieval(indices=idx[order], similarities=s[order], exhausted=take < n)


def retrieve_by_concept(ds: EmbeddingDataset, ec: ConceptEmbedding, n: int = 20, exclude=()) -> Retrieval:
    """Top-``n`` rows by cosine similarity to the concept embedding,
    highest first, ties by lower index. ``exhausted`` is set when fewer
    than ``n`` rows were available."""
    return _retrieve_vector(ds, ec.vector, n, exclude)


def navigate_component(subspace: ConceptSubspace, center: ConceptEmbedding, component: int,
                       offsets, ds: EmbeddingDataset, per_step_n: int = 20, exclude=()) -> list:
    """Retrieve around ``e_c + t * std_component * basis[:, component]`` for each offset ``t``."""
    if not 0 <= component < subspace.k:
        raise ValueError(f"component {component} out of range for k={subspace.k}")
    offsets = [float(t) for t in offsets]
    if not all(np.isfinite(offsets)):
        raise ValueError("offsets must be finite")
    step = np.sqrt(subspace.component_variances[component]) * subspace.basis[:, component]
    return [_retrieve_vector(ds, center.vector + t * step, per_step_n, exclude) for t in offsets]
