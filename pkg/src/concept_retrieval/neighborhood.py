"""Cosine similarity and thresholded neighborhood search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding_store import ZERO_NORM, EmbeddingDataset, SimilarityStats

DEFAULT_Z = 0.25
DEFAULT_MIN_NEIGHBORHOOD = 200


@dataclass(frozen=True)
class Neighborhood:
    query_index: int
    member_indices: np.ndarray
    similarities: np.ndarray
    threshold: float
    fallback: bool = False

    def __len__(self):
        return len(self.member_indices)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < ZERO_NORM or nb < ZERO_NORM:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def row_norms(ds: EmbeddingDataset) -> np.ndarray:
    if ds.normalized:
        return np.ones(ds.n)
    return np.linalg.norm(ds.vectors, axis=1)


def similarities_to(ds: EmbeddingDataset, vector, norms=None) -> np.ndarray:
    """Cosine similarity of every row to ``vector``; suppressed rows give NaN."""
    vector = np.asarray(vector, dtype=np.float64)
    vn = np.linalg.norm(vector)
    if vn < ZERO_NORM:
        raise ValueError("cosine similarity is undefined for a zero-norm vector")
    if norms is None:
        norms = row_norms(ds)
    dots = ds.vectors @ vector
    live = ~ds.suppressed & (norms >= ZERO_NORM)
    out = np.full(ds.n, np.nan)
    out[live] = np.clip(dots[live] / (norms[live] * vn), -1.0, 1.0)
    return out


def _check_index(ds: EmbeddingDataset, index) -> int:
    if isinstance(index, (bool, np.bool_)) or not isinstance(index, (int, np.integer)):
        raise IndexError(f"row index must be an integer, got {index!r}")
    if not 0 <= index < ds.n:
        raise IndexError(f"row index {index} out of range for {ds.n} rows")
    return int(index)


def find_neighborhood(ds: EmbeddingDataset, query_index: int, stats: SimilarityStats,
                      z: float = DEFAULT_Z, min_neighborhood: int = DEFAULT_MIN_NEIGHBORHOOD,
                      query_vector=None) -> Neighborhood:
    """Rows whose similarity to the query is at least ``mu + z * sigma``.

    If fewer than ``min_neighborhood`` rows clear the threshold, the
    ``min_neighborhood`` most similar rows are returned instead and
    ``fallback`` is set. ``query_vector`` overrides the query's own row.
    """
    query_index = _check_index(ds, query_index)
    threshold = stats.mu + z * stats.sigma
    q = ds.vectors[query_index] if query_vector is None else query_vector
    sims = similarities_to(ds, q)
    sims[query_index] = np.nan
    candidates = np.flatnonzero(~np.isnan(sims))
    strict = candidates[sims[candidates] >= threshold]
    fallback = False
    if len(strict) < min_neighborhood:
        fallback = True
        take = min(min_neighborhood, len(candidates))
        order = np.lexsort((candidates, -sims[candidates]))
        strict = np.sort(candidates[order[:take]])
    return Neighborhood(query_index=query_index, member_indices=strict,
                        similarities=sims[strict], threshold=float(threshold),
                        fallback=fallback)


def pairwise_similarity_matrix(ds: EmbeddingDataset, indices) -> np.ndarray:
    indices = np.asarray(indices)
    if indices.ndim != 1 or len(indices) < 2:
        raise ValueError("need at least two indices")
    if indices.min() < 0 or indices.max() >= ds.n:
        raise IndexError("index out of range")
    x = ds.vectors[indices]
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms < ZERO_NORM):
        raise ValueError("zero-norm row in selection")
    x = x / norms[:, None]
    m = x @ x.T
    m = 0.5 * (m + m.T)
    np.fill_diagonal(m, 1.0)
    return np.clip(m, -1.0, 1.0)


def cross_similarities(ds: EmbeddingDataset, rows, cols, norms=None) -> np.ndarray:
    """Cosine similarity block between two index lists."""
    if norms is None:
        norms = row_norms(ds)
    a = ds.vectors[rows] / norms[rows][:, None]
    b = ds.vectors[cols] / norms[cols][:, None]
    return np.clip(a @ b.T, -1.0, 1.0)
