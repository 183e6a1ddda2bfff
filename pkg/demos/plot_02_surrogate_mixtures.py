"""
What makes a good surrogate
===========================

Every neighbor of the query is a candidate. Its similarities to the rest of
the neighborhood are fitted with a two-component Gaussian mixture; the
high-mean component is the concept it shares with part of the neighborhood.
"""

import numpy as np

from concept_retrieval import (
    ExtractionConfig,
    PlantedSpec,
    estimate_similarity_stats,
    find_neighborhood,
    generate_planted,
    normalize_rows,
)
from concept_retrieval.neighborhood import cross_similarities
from concept_retrieval.surrogate import evaluate_candidates, select_surrogate
from concept_retrieval.errors import NoConceptFound

ds, truth = generate_planted(PlantedSpec(n=2000, d=32, g=6, concepts_per_image=(1, 2), noise_sigma=0.1, seed=3))
stats = estimate_similarity_stats(ds)
query = next(i for i, lab in enumerate(truth.labels) if len(lab) == 2)
nbr = find_neighborhood(ds, query, stats)
print(f"query {query} {sorted(truth.labels[query])}: {len(nbr)} neighbors above {nbr.threshold:.3f}")

#########################################################################
# Score a handful of candidates. Pure single-concept neighbors that share a
# concept with the query split the neighborhood cleanly.

config = ExtractionConfig()
candidates = nbr.member_indices[:12]
for c in evaluate_candidates(ds, nbr, candidates, config):
    g = c.gmm
    fit = "no fit" if g is None else f"mu {g.mu1:.2f}/{g.mu2:.2f} sigma {g.sigma1:.2f}/{g.sigma2:.2f}"
    status = "valid" if c.valid else c.rejection_reason.value
    print(f"  {c.candidate_index:5d} {sorted(truth.labels[c.candidate_index])!s:8} sep {c.sep_score:+.3f} "
          f"{fit}  query p={c.query_membership:.2f}  {status}")

cs = select_surrogate(ds, nbr, query, config)
s = cs.surrogate.candidate_index
sims = cross_similarities(ds, [s], nbr.member_indices)[0]
hist, edges = np.histogram(sims, bins=12)
print(f"\nselected surrogate {s} {sorted(truth.labels[s])}, concept set of {len(cs)}")
for h, lo in zip(hist, edges):
    print(f"  {lo:+.2f} {'#' * int(60 * h / hist.max())}")

#########################################################################
# On isotropic noise no candidate's mixture beats a single Gaussian, so
# the search reports why it gave up instead of inventing a concept.

noise = normalize_rows(type(ds)(ids=[str(i) for i in range(1500)],
                                vectors=np.random.default_rng(0).standard_normal((1500, 64))))
try:
    select_surrogate(noise, find_neighborhood(noise, 0, estimate_similarity_stats(noise)), 0, config)
except NoConceptFound as exc:
    print(f"\nnoise: {exc}")
