"""Surrogate selection: which neighbor's similarity profile splits best.

Every neighborhood member is a candidate. For a candidate ``s`` we fit a
two-component mixture to its similarities with the other neighborhood
members; the high-mean component is the concept it shares with part of the
neighborhood. A candidate is usable when the two components are separated
(see ``separated``), the mixture clearly beats a single Gaussian (see
``bic_gain``), both components hold enough members and the query itself
falls in the concept component. Among usable candidates the widest gap
between the components wins.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .config import ExtractionConfig
from .embedding_store import EmbeddingDataset
from .errors import NoConceptFound
from .mixture import Gmm2, fit_gmm_batch, membership_probability
from .neighborhood import Neighborhood, cross_similarities, row_norms

_BLOCK_ELEMENTS = 1 << 22      # candidate rows are fitted in blocks of ~4M values
_CONFIRM = 8                   # leading candidates refitted on every neighbor per round


class Rejection(str, enum.Enum):
    TOO_FEW_CONCEPT = "too_few_concept"
    TOO_FEW_NONCONCEPT = "too_few_nonconcept"
    QUERY_NOT_IN_CONCEPT = "query_not_in_concept"
    DEGENERATE_FIT = "degenerate_fit"


@dataclass(frozen=True)
class SurrogateCandidate:
    candidate_index: int
    gmm: Gmm2 | None
    sep_score: float
    concept_count: int
    nonconcept_count: int
    query_membership: float
    valid: bool
    rejection_reason: Rejection | None = None


@dataclass(frozen=True)
class ConceptSet:
    surrogate: SurrogateCandidate
    member_indices: np.ndarray
    membership_probabilities: np.ndarray

    def __len__(self):
        return len(self.member_indices)


def sep_score(g: Gmm2) -> float:
    """Gap between the concept component's lower and the other's upper 1-sigma bound."""
    return (g.mu1 - g.sigma1) - (g.mu2 + g.sigma2)


def separated(g: Gmm2, threshold: float) -> bool:
    """Whether the fit shows a distinct concept mode.

    The one-sigma intervals of the two components must not overlap
    (``sep_score > 0``) and the concept component's lower bound must reach
    the neighborhood threshold, i.e. its members are neighbor-level similar
    to the candidate.
    """
    return sep_score(g) > 0.0 and g.mu1 - g.sigma1 >= threshold


def bic_gain(g: Gmm2, values) -> float:
    """BIC of one Gaussian minus BIC of the fitted mixture, on ``values``.

    Positive values favor two components; the mixture has three extra
    parameters. ``g.log_likelihood`` must be the total over ``values``.
    """
    x = np.asarray(values, dtype=np.float64)
    m = x.size
    var = max(float(x.var()), 1e-300)
    single = -0.5 * m * (math.log(2.0 * math.pi * var) + 1.0)
    return 2.0 * (g.log_likelihood - single) - 3.0 * math.log(m)


def _posterior_rows(params, values):
    """P(component 1 | x) for a block of rows, one mixture per row."""
    pi1, mu1, mu2, s1, s2 = (np.asarray(p)[:, None] for p in params)
    z1 = (values - mu1) / s1
    z2 = (values - mu2) / s2
    a1 = np.log(pi1) - np.log(s1) - 0.5 * z1 * z1
    a2 = np.log(1.0 - pi1) - np.log(s2) - 0.5 * z2 * z2
    return np.exp(a1 - np.logaddexp(a1, a2))


def _candidate_seed(seed: int, candidate: int):
    return [int(seed) & 0xFFFFFFFF, int(candidate)]


def _fit_subset(members: np.ndarray, config: ExtractionConfig, seed: int):
    """Positions (into ``members``) of the shared fitting subset, or None for all.

    One spare position is drawn so every candidate can drop itself (or the
    spare) and still fit exactly ``max_fit_samples`` values.
    """
    k = config.max_fit_samples
    if k is None or len(members) - 1 <= k:
        return None
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0x5EED])
    return np.sort(rng.choice(len(members), size=k + 1, replace=False))


def _drop_self(sims, self_pos):
    """Remove one column per row (``self_pos[i]`` in row ``i``)."""
    b, m = sims.shape
    keep = np.ones_like(sims, dtype=bool)
    keep[np.arange(b), self_pos] = False
    return sims[keep].reshape(b, m - 1)


def evaluate_candidates(ds: EmbeddingDataset, nbr: Neighborhood, candidates, config: ExtractionConfig,
                        seed: int = 0, query_vector=None) -> list:
    """Fit and judge each candidate (all must be neighborhood members)."""
    members = np.asarray(nbr.member_indices)
    candidates = np.asarray(candidates, dtype=int)
    m = len(members)
    pos = np.searchsorted(members, candidates)
    if np.any(pos >= m) or np.any(members[np.minimum(pos, m - 1)] != candidates):
        raise ValueError("every candidate must be a neighborhood member")
    norms = row_norms(ds)
    q = ds.vectors[nbr.query_index] if query_vector is None else np.asarray(query_vector, float)
    q_unit = q / np.linalg.norm(q)
    floor = config.component_floor(m)
    settings = config.em_settings()
    subset = _fit_subset(members, config, seed)
    out = []
    block = max(1, _BLOCK_ELEMENTS // max(m, 1))
    for lo in range(0, len(candidates), block):
        cand = candidates[lo: lo + block]
        cpos = pos[lo: lo + block]
        sims = cross_similarities(ds, cand, members, norms)
        values = _drop_self(sims, cpos)          # candidate vs every other member
        if subset is None:
            fit_values = values
        else:
            # drop the candidate's own column if it was drawn, else the spare
            at = np.searchsorted(subset, cpos)
            hit = (at < len(subset)) & (subset[np.minimum(at, len(subset) - 1)] == cpos)
            fit_values = _drop_self(sims[:, subset], np.where(hit, at, len(subset) - 1))
        q_sims = np.clip((ds.vectors[cand] / norms[cand][:, None]) @ q_unit, -1.0, 1.0)
        fits = fit_gmm_batch(fit_values, settings, seeds=[_candidate_seed(seed, c) for c in cand])
        ok = [k for k, g in enumerate(fits) if g is not None]
        counts1 = np.zeros(len(cand), dtype=int)
        if ok:
            params = [np.array([getattr(fits[k], f) for k in ok])
                      for f in ("pi1", "mu1", "mu2", "sigma1", "sigma2")]
            post = _posterior_rows(params, values[ok])
            counts1[ok] = (post >= 0.5).sum(1)
        for k, c in enumerate(cand):
            g = fits[k]
            if g is None:
                out.append(SurrogateCandidate(int(c), None, -math.inf, 0, 0, 0.0, False,
                                              Rejection.DEGENERATE_FIT))
                continue
            n1 = int(counts1[k])
            n2 = (m - 1) - n1
            qm = float(membership_probability(g, q_sims[k]))
            reason = None
            if config.require_separation and (not separated(g, nbr.threshold)
                                              or bic_gain(g, fit_values[k]) < config.min_bic_gain):
                reason = Rejection.DEGENERATE_FIT
            elif n1 < floor:
                reason = Rejection.TOO_FEW_CONCEPT
            elif n2 < floor:
                reason = Rejection.TOO_FEW_NONCONCEPT
            elif qm < config.tau:
                reason = Rejection.QUERY_NOT_IN_CONCEPT
            out.append(SurrogateCandidate(int(c), g, sep_score(g), n1, n2, qm, reason is None, reason))
    return out


def evaluate_candidate(ds: EmbeddingDataset, nbr: Neighborhood, candidate_index: int,
                       query_index: int, config: ExtractionConfig, seed: int = 0,
                       query_vector=None) -> SurrogateCandidate:
    if query_index != nbr.query_index:
        raise ValueError("neighborhood was built for a different query")
    return evaluate_candidates(ds, nbr, [candidate_index], config, seed, query_vector)[0]


def candidate_pool(nbr: Neighborhood, config: ExtractionConfig, seed: int) -> np.ndarray:
    members = np.asarray(nbr.member_indices)
    if len(members) <= config.max_candidates:
        return members
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(members, size=config.max_candidates, replace=False))


def best_candidate(evaluated) -> SurrogateCandidate | None:
    """Highest sep_score; ties go to the higher concept mean, then the lower index."""
    valid = [c for c in evaluated if c.valid]
    if not valid:
        return None
    return min(valid, key=lambda c: (-c.sep_score, -c.gmm.mu1, c.candidate_index))


def concept_set_for(ds: EmbeddingDataset, nbr: Neighborhood, surrogate: SurrogateCandidate,
                    config: ExtractionConfig) -> ConceptSet:
    """Neighborhood members whose posterior in the concept component exceeds tau."""
    members = np.asarray(nbr.member_indices)
    sims = cross_similarities(ds, [surrogate.candidate_index], members)[0]
    post = np.asarray(membership_probability(surrogate.gmm, sims))
    keep = post > config.tau
    return ConceptSet(surrogate=surrogate, member_indices=members[keep],
                      membership_probabilities=post[keep])


def _confirm(ds, nbr, evaluated, config, seed, query_vector):
    """Refit the leading subsample-screened candidates on every neighbor.

    Candidates are taken best-first in rounds of ``_CONFIRM``; the first
    round that leaves a valid candidate decides. Returns None if none holds.
    """
    ranked = sorted((c for c in evaluated if c.valid),
                    key=lambda c: (-c.sep_score, -c.gmm.mu1, c.candidate_index))
    full = replace(config, max_fit_samples=None)
    for lo in range(0, len(ranked), _CONFIRM):
        batch = [c.candidate_index for c in ranked[lo: lo + _CONFIRM]]
        best = best_candidate(evaluate_candidates(ds, nbr, batch, full, seed, query_vector))
        if best is not None:
            return best
    return None


def select_surrogate(ds: EmbeddingDataset, nbr: Neighborhood, query_index: int,
                     config: ExtractionConfig, seed: int = 0, query_vector=None) -> ConceptSet:
    """Pick the best-separating valid surrogate and return its concept set.

    When candidates were screened on a subsample of the neighborhood, the
    leaders are refitted on all of it before one is chosen. Raises
    ``NoConceptFound`` when the neighborhood is too small to fit or no
    candidate passes every validity criterion.
    """
    if query_index != nbr.query_index:
        raise ValueError("neighborhood was built for a different query")
    if len(nbr) - 1 < config.min_samples:
        raise NoConceptFound(f"neighborhood of {len(nbr)} is too small to fit a mixture")
    pool = candidate_pool(nbr, config, seed)
    evaluated = evaluate_candidates(ds, nbr, pool, config, seed, query_vector)
    subsampled = config.max_fit_samples is not None and len(nbr) - 1 > config.max_fit_samples
    best = _confirm(ds, nbr, evaluated, config, seed, query_vector) if subsampled else best_candidate(evaluated)
    if best is None:
        tally = {}
        for c in evaluated:
            key = c.rejection_reason.value if c.rejection_reason else "failed_full_refit"
            tally[key] = tally.get(key, 0) + 1
        detail = ", ".join(f"{k}: {v}" for k, v in sorted(tally.items()))
        raise NoConceptFound(f"no neighborhood member qualifies as a surrogate ({detail})", tally)
    return concept_set_for(ds, nbr, best, config)
