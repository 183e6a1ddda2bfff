from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .mixture import EMSettings


@dataclass(frozen=True)
class ExtractionConfig:
    """Knobs for one concept-extraction run.

    ``z`` sets the neighborhood threshold ``mu + z * sigma`` in units of the
    dataset similarity spread. ``tau`` is the posterior cut for concept
    membership, ``tau1`` the fraction of variance the concept subspace must
    capture, and ``update_fraction`` the share of the dataset suppressed
    after each concept. ``min_component_count=None`` means
    ``max(10, ceil(5% of the neighborhood))``. Each candidate's mixture is
    fitted on at most ``max_fit_samples`` neighbors (a seeded subset shared
    by all candidates; ``None`` fits on every neighbor), while component
    counts always use the whole neighborhood. With ``require_separation`` a
    fit counts as degenerate unless ``sep_score > 0`` and the concept
    component's lower bound ``mu1 - sigma1`` clears the neighborhood
    threshold, and the two-component fit must beat a single Gaussian by a
    BIC margin of at least ``min_bic_gain`` (10 is the usual "very strong
    evidence" level).
    """

    num_concepts: int = 3
    z: float = 0.25
    tau: float = 0.5
    tau1: float = 0.25
    update_fraction: float = 0.10
    retrieve_n: int = 20
    min_neighborhood: int = 200
    min_component_count: int | None = None
    max_candidates: int = 512
    max_fit_samples: int | None = 512
    require_separation: bool = True
    min_bic_gain: float = 10.0
    sigma_floor: float = 1e-4
    min_samples: int = 20
    stats_sample_pairs: int = 100_000
    exclude_retrieved: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.num_concepts < 1:
            raise ValueError("num_concepts must be >= 1")
        if not math.isfinite(self.z):
            raise ValueError("z must be finite")
        if not 0.0 <= self.tau < 1.0:
            raise ValueError("tau must lie in [0, 1)")
        if not 0.0 < self.tau1 <= 1.0:
            raise ValueError("tau1 must lie in (0, 1]")
        if not 0.0 <= self.update_fraction <= 1.0:
            raise ValueError("update_fraction must lie in [0, 1]")
        for name in ("retrieve_n", "min_neighborhood", "max_candidates", "min_samples",
                     "stats_sample_pairs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_fit_samples is not None and self.max_fit_samples < self.min_samples:
            raise ValueError("max_fit_samples must be >= min_samples")
        if self.min_component_count is not None and self.min_component_count < 1:
            raise ValueError("min_component_count must be >= 1")
        if not math.isfinite(self.min_bic_gain):
            raise ValueError("min_bic_gain must be finite")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")

    def em_settings(self) -> EMSettings:
        return EMSettings(min_samples=self.min_samples, sigma_floor=self.sigma_floor)

    def component_floor(self, neighborhood_size: int) -> int:
        if self.min_component_count is not None:
            return self.min_component_count
        return max(10, math.ceil(0.05 * neighborhood_size))

    def to_dict(self) -> dict:
        return asdict(self)
