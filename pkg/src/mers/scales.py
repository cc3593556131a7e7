"""Data-driven scale parameters for coverage selection.

All quantities are computed from a class-restricted distance matrix:

* kNN density  ``f_k(x) = k / rho_k(x)`` with ``rho_k`` the mean distance to the
  k nearest neighbours,
* embedding weight ``alpha = median(f_k) / median(f_1)``,
* RBF bandwidth ``sigma`` by the median heuristic,
* ball radius ``delta`` as the median over points of the median kNN distance,
* the memory-aware neighbour count ``k = round(n_class / budget_class)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .embeddings import DistanceMatrix, knn_distances
from .errors import DegenerateInputError, DomainError

# Mean kNN distances below this are floored so exact duplicates keep a finite density.
RHO_FLOOR = 1e-12


@dataclass
class ScaleProfile:
    sigma: float
    delta: float
    alpha: float
    k_used: int
    embedding_name: str
    class_label: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma"] = float(d["sigma"])
        d["delta"] = float(d["delta"])
        d["alpha"] = float(d["alpha"])
        d["k_used"] = int(d["k_used"])
        d["class_label"] = int(d["class_label"])
        return d


@dataclass
class DensityEstimate:
    rho_k: np.ndarray
    f_hat: np.ndarray


def median(values) -> float:
    """Median by full sort; even lengths average the two central values."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise DegenerateInputError("median of an empty sequence")
    mid = v.size // 2
    if v.size % 2:
        return float(v[mid])
    return float((v[mid - 1] + v[mid]) / 2.0)


def _require_pair(dist: DistanceMatrix, what: str):
    if dist.n < 2:
        raise DegenerateInputError(f"{what} needs at least 2 points, class has {dist.n}")


def knn_density(dist: DistanceMatrix, k: int) -> DensityEstimate:
    _require_pair(dist, "kNN density")
    nd = knn_distances(dist, k)
    rho = nd.mean(axis=1)
    f_hat = k / np.maximum(rho, RHO_FLOOR)
    return DensityEstimate(rho_k=rho, f_hat=f_hat)


def embedding_weight(dist: DistanceMatrix, k: int) -> float:
    """``median(f_k) / median(f_1)``; invariant to a global rescaling of distances."""
    num = median(knn_density(dist, k).f_hat)
    den = median(knn_density(dist, 1).f_hat)
    return num / den


def beta_ratio(alpha_supervised: float, alpha_ssl: float) -> float:
    if not (alpha_supervised > 0 and alpha_ssl > 0):
        raise DomainError(f"embedding weights must be positive, got {alpha_supervised}, {alpha_ssl}")
    return alpha_supervised / alpha_ssl


def median_heuristic_sigma(dist: DistanceMatrix) -> float:
    """Median of the n(n-1)/2 off-diagonal distances.

    May return 0 when every point coincides; the kernel builder rejects that.
    """
    _require_pair(dist, "median heuristic")
    iu = np.triu_indices(dist.n, k=1)
    return median(dist.values[iu])


def delta_from_knn(dist: DistanceMatrix, k: int) -> float:
    _require_pair(dist, "delta estimation")
    nd = knn_distances(dist, k)
    # Rows of nd are sorted, so the per-point median is read off directly.
    if k % 2:
        r = nd[:, k // 2]
    else:
        r = (nd[:, k // 2 - 1] + nd[:, k // 2]) / 2.0
    return median(r)


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def memory_aware_k(n_class: int, budget_class: int) -> int:
    """Neighbour count ``round(n_class / budget_class)`` clamped to ``[1, n_class - 1]``."""
    if budget_class < 1:
        raise DomainError(f"class budget must be >= 1, got {budget_class}")
    if n_class < 2:
        raise DegenerateInputError(f"memory-aware k needs n_class >= 2, got {n_class}")
    k = round_half_away(n_class / budget_class)
    return max(1, min(k, n_class - 1))
