"""Ball graphs, RBF kernels and the weighted multi-embedding coverage objective.

The objective is

    F(L) = sum_m alpha_m * | union_{x in L} B_m(x) |

where ``B_m(x)`` is the delta_m-ball around ``x`` in embedding ``m``. Covered
state is kept per embedding (one boolean mask each), i.e. over the disjoint
union of per-embedding copies of the ground set. A point covered in one
embedding is *not* thereby covered in another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embeddings import DistanceMatrix
from .errors import DomainError, StructuralError


@dataclass
class NeighborGraph:
    adjacency: np.ndarray  # bool n x n, row i = members of B(x_i)
    delta: float
    embedding_name: str = "view"

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def balls(self) -> list:
        return [np.flatnonzero(row) for row in self.adjacency]

    @property
    def sizes(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


@dataclass
class KernelMatrix:
    values: np.ndarray
    sigma: float | None = None
    weights: tuple | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class CoverageState:
    """Per-embedding uncovered masks plus the embedding weights."""

    uncovered: np.ndarray  # bool M x n
    weights: np.ndarray = field(default=None)

    @classmethod
    def fresh(cls, n: int, weights) -> "CoverageState":
        w = np.asarray(weights, dtype=np.float64)
        return cls(np.ones((w.size, n), dtype=bool), w)

    def gains(self, graphs) -> np.ndarray:
        """Weighted count of still-uncovered ball members for every candidate."""
        counts = [g.adjacency.astype(np.int64) @ self.uncovered[m].astype(np.int64) for m, g in enumerate(graphs)]
        total = np.zeros(graphs[0].n, dtype=np.float64)
        for m, cnt in enumerate(counts):
            total = total + self.weights[m] * cnt
        return total

    def cover(self, graphs, j: int) -> None:
        for m, g in enumerate(graphs):
            self.uncovered[m] &= ~g.adjacency[j]


def build_ball_graph(dist: DistanceMatrix, delta: float, embedding_name: str = "view") -> NeighborGraph:
    """``B(x_i) = {j : d(i, j) <= delta}``; inclusive boundary, self always a member."""
    if not delta > 0:
        raise DomainError(f"ball radius must be positive, got {delta}")
    adj = dist.values <= delta
    np.fill_diagonal(adj, True)
    return NeighborGraph(adj, float(delta), embedding_name)


def _check_weights(graphs, weights):
    if len(graphs) != len(weights):
        raise StructuralError(f"{len(graphs)} graphs but {len(weights)} weights")
    if len(graphs) == 0:
        raise StructuralError("at least one graph is required")
    n = graphs[0].n
    if any(g.n != n for g in graphs):
        raise StructuralError("graphs are over different point sets")
    if any(w < 0 for w in weights):
        raise DomainError(f"embedding weights must be non-negative, got {list(weights)}")


def coverage_value(selected, graphs, weights) -> float:
    _check_weights(graphs, weights)
    n = graphs[0].n
    sel = np.asarray(list(selected), dtype=np.int64)
    if sel.size and (sel.min() < 0 or sel.max() >= n):
        raise DomainError(f"selected ids must lie in [0, {n}), got {sel.tolist()}")
    if sel.size == 0:
        return 0.0
    total = 0.0
    for g, w in zip(graphs, weights):
        total += w * int(g.adjacency[sel].any(axis=0).sum())
    return total


def rbf_kernel_matrix(dist: DistanceMatrix, sigma: float) -> KernelMatrix:
    """``exp(-d^2 / (2 sigma^2))`` applied to whatever distance the pipeline uses."""
    if not (sigma > 0 and math.isfinite(sigma)):
        raise DomainError(f"RBF bandwidth must be positive and finite, got {sigma}")
    vals = np.exp(-np.square(dist.values) / (2.0 * sigma * sigma))
    return KernelMatrix(vals, sigma=float(sigma))


def combined_kernel(kernels, weights) -> KernelMatrix:
    if len(kernels) != len(weights) or not kernels:
        raise StructuralError(f"{len(kernels)} kernels but {len(weights)} weights")
    shape = kernels[0].values.shape
    if any(k.values.shape != shape for k in kernels):
        raise StructuralError("kernels have different shapes")
    vals = np.zeros(shape)
    for k, w in zip(kernels, weights):
        vals = vals + w * k.values
    return KernelMatrix(vals, weights=tuple(float(w) for w in weights))


@dataclass
class SubmodularityReport:
    passed: bool
    trials: int
    violations: int
    counterexample: dict | None = None


def check_submodularity(graphs, weights, trials: int = 100, seed: int = 0, tol: float = 1e-9) -> SubmodularityReport:
    """Sample ``A <= B`` and ``x not in B``; test diminishing returns and monotonicity."""
    _check_weights(graphs, weights)
    n = graphs[0].n
    rng = np.random.default_rng(seed)
    violations = 0
    example = None
    for _ in range(trials):
        if n < 2:
            break
        b_size = int(rng.integers(0, n))
        perm = rng.permutation(n)
        B = perm[:b_size]
        x = int(perm[b_size])
        A = B[rng.random(b_size) < 0.5]
        fa = coverage_value(A, graphs, weights)
        fb = coverage_value(B, graphs, weights)
        fax = coverage_value(np.append(A, x), graphs, weights)
        fbx = coverage_value(np.append(B, x), graphs, weights)
        dr_ok = (fax - fa) >= (fbx - fb) - tol
        mono_ok = fa <= fb + tol and fa <= fax + tol and fb <= fbx + tol
        if not (dr_ok and mono_ok):
            violations += 1
            if example is None:
                example = {"A": sorted(A.tolist()), "B": sorted(B.tolist()), "x": x,
                           "gain_A": fax - fa, "gain_B": fbx - fb}
    return SubmodularityReport(violations == 0, trials, violations, example)
