"""Synthetic embedding datasets with planted concepts, and recovery scoring.

Each image is built from a few orthonormal "concept directions". Optional
attribute axes (also orthonormal, and orthogonal to every concept) give a
concept internal variation, so navigation along a principal direction has
a measurable ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding_store import EmbeddingDataset, save_embeddings
from .errors import InfeasibleSpecError


@dataclass(frozen=True)
class PlantedSpec:
    """Generator parameters.

    ``noise_sigma`` is the per-coordinate standard deviation of the noise
    added to the unit-norm clean signal. ``attribute_axes`` is either one
    count for every concept or a per-concept sequence; ``attribute_scale``
    is the std of the coordinates along those axes. ``correlation`` mixes a
    shared direction into all concepts (0 keeps them orthonormal).
    """

    n: int = 5000
    d: int = 64
    g: int = 10
    concepts_per_image: tuple = (1, 3)
    noise_sigma: float = 0.15
    attribute_axes: object = 0
    attribute_scale: float = 0.5
    correlation: float = 0.0
    seed: int = 0

    def axes_per_concept(self) -> list:
        if np.ndim(self.attribute_axes) == 0:
            return [int(self.attribute_axes)] * self.g
        axes = [int(a) for a in self.attribute_axes]
        if len(axes) != self.g:
            raise InfeasibleSpecError(f"attribute_axes has {len(axes)} entries for g={self.g}")
        return axes


@dataclass(frozen=True, eq=False)
class PlantedTruth:
    concept_directions: np.ndarray        # (g, d)
    labels: tuple                         # per image: frozenset of concept indices
    attribute_axes: tuple = ()            # per concept: (a_c, d) array
    attribute_coordinates: tuple = ()     # per concept: (n, a_c) array, NaN where absent

    def members_of(self, concept: int) -> np.ndarray:
        return np.array([i for i, lab in enumerate(self.labels) if concept in lab], dtype=int)

    def to_json(self, include_directions: bool = False) -> dict:
        doc = {
            "labels": [sorted(int(c) for c in lab) for lab in self.labels],
            "attribute_coordinates": [
                [[None if np.isnan(v) else float(v) for v in row] for row in coords]
                for coords in self.attribute_coordinates
            ],
        }
        if include_directions:
            doc["concept_directions"] = self.concept_directions.tolist()
            doc["attribute_axes"] = [a.tolist() for a in self.attribute_axes]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "PlantedTruth":
        directions = np.asarray(doc.get("concept_directions", np.zeros((0, 0))), dtype=float)
        axes = tuple(np.asarray(a, dtype=float) for a in doc.get("attribute_axes", []))
        coords = tuple(np.array([[np.nan if v is None else v for v in row] for row in c], dtype=float)
                       for c in doc.get("attribute_coordinates", []))
        return cls(concept_directions=directions,
                   labels=tuple(frozenset(lab) for lab in doc["labels"]),
                   attribute_axes=axes, attribute_coordinates=coords)


def _validate(spec: PlantedSpec):
    if spec.n < 2 or spec.d < 2 or spec.g < 1:
        raise InfeasibleSpecError("need n >= 2, d >= 2, g >= 1")
    if spec.g > spec.d / 2:
        raise InfeasibleSpecError(f"g={spec.g} exceeds d/2={spec.d / 2}")
    if spec.noise_sigma < 0 or spec.attribute_scale < 0:
        raise InfeasibleSpecError("noise_sigma and attribute_scale must be >= 0")
    lo, hi = spec.concepts_per_image
    if not 1 <= lo <= hi <= spec.g:
        raise InfeasibleSpecError(f"concepts_per_image {spec.concepts_per_image} infeasible for g={spec.g}")
    if not 0.0 <= spec.correlation < 1.0:
        raise InfeasibleSpecError("correlation must lie in [0, 1)")
    n_dirs = spec.g + sum(spec.axes_per_concept()) + (1 if spec.correlation > 0 else 0)
    if n_dirs > spec.d:
        raise InfeasibleSpecError(f"{n_dirs} orthogonal directions do not fit in d={spec.d}")


def generate_planted(spec: PlantedSpec):
    """Return ``(dataset, truth)``; the dataset is unit-normalized."""
    _validate(spec)
    rng = np.random.default_rng(spec.seed)
    axes_counts = spec.axes_per_concept()
    n_dirs = spec.g + sum(axes_counts) + (1 if spec.correlation > 0 else 0)
    q, _ = np.linalg.qr(rng.standard_normal((spec.d, n_dirs)))
    basis = q.T
    directions = basis[: spec.g].copy()
    if spec.correlation > 0:
        shared = basis[-1]
        c = spec.correlation
        directions = np.sqrt(1 - c) * directions + np.sqrt(c) * shared
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    axes = []
    pos = spec.g
    for a in axes_counts:
        axes.append(basis[pos: pos + a].copy())
        pos += a

    lo, hi = spec.concepts_per_image
    counts = rng.integers(lo, hi + 1, size=spec.n)
    labels = []
    clean = np.zeros((spec.n, spec.d))
    coords = [np.full((spec.n, a), np.nan) for a in axes_counts]
    for i in range(spec.n):
        chosen = np.sort(rng.choice(spec.g, size=counts[i], replace=False))
        labels.append(frozenset(int(c) for c in chosen))
        v = directions[chosen].sum(0)
        for c in chosen:
            if axes_counts[c]:
                t = rng.normal(0.0, spec.attribute_scale, size=axes_counts[c])
                coords[c][i] = t
                v = v + t @ axes[c]
        clean[i] = v / np.linalg.norm(v)
    noisy = clean + rng.normal(0.0, spec.noise_sigma, size=clean.shape) if spec.noise_sigma > 0 else clean
    noisy = noisy / np.linalg.norm(noisy, axis=1, keepdims=True)
    ds = EmbeddingDataset(ids=[str(i) for i in range(spec.n)], vectors=noisy, normalized=True)
    truth = PlantedTruth(concept_directions=directions, labels=tuple(labels),
                         attribute_axes=tuple(axes), attribute_coordinates=tuple(coords))
    return ds, truth


def write_planted(ds: EmbeddingDataset, truth: PlantedTruth, dataset_path, truth_path,
                  include_directions: bool = False) -> None:
    save_embeddings(ds, dataset_path, format="binary")
    Path(truth_path).write_text(json.dumps(truth.to_json(include_directions), sort_keys=True))


@dataclass(frozen=True)
class RecoveryScore:
    purity: tuple               # per extracted concept
    matched: tuple              # planted concept index per extracted concept (-1 if none)
    coverage: float
    mean_purity: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mean_purity",
                           float(np.mean(self.purity)) if self.purity else 0.0)


def score_retrieved_sets(retrieved_sets, query_index: int, truth: PlantedTruth,
                         num_concepts: int) -> RecoveryScore:
    """Purity/coverage of extracted concepts against planted labels.

    ``retrieved_sets`` is one index list per extracted concept. A concept is
    matched to the planted concept carried by the most retrieved images
    (ties go to the lower index); purity is that image fraction. Coverage is
    the number of distinct planted concepts of the query that were matched,
    divided by ``min(num_concepts, planted concepts of the query)``.
    """
    purity, matched = [], []
    g = len(truth.concept_directions) if len(truth.concept_directions) else (
        1 + max((max(lab) for lab in truth.labels if lab), default=0))
    for retrieved in retrieved_sets:
        retrieved = list(retrieved)
        if not retrieved:
            purity.append(0.0)
            matched.append(-1)
            continue
        counts = np.zeros(g, dtype=int)
        for i in retrieved:
            for c in truth.labels[i]:
                counts[c] += 1
        best = int(np.argmax(counts))
        purity.append(counts[best] / len(retrieved))
        matched.append(best)
    distinct = len({m for m in matched if m in truth.labels[query_index]})
    target = min(num_concepts, len(truth.labels[query_index]))
    coverage = distinct / target if target else 0.0
    return RecoveryScore(purity=tuple(purity), matched=tuple(matched), coverage=float(coverage))


def score_recovery(result, truth: PlantedTruth) -> RecoveryScore:
    """Score an ``ExtractionResult`` against planted labels."""
    return score_retrieved_sets([c.retrieved.indices for c in result.concepts],
                                result.query_index, truth, result.config.num_concepts)
