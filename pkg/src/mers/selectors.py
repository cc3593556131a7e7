"""Greedy subset selectors and baselines.

Every selector works in row-position space (0..n-1) and breaks ties toward
the lowest position. Budgets larger than the pool are clamped and flagged.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .coverage import CoverageState, KernelMatrix, _check_weights, coverage_value
from .errors import DomainError, OracleRefusal

METHODS = ("mers-probcover", "mers-maxherding", "probcover", "maxherding", "herding", "random")

ORACLE_LIMIT = 10**6


@dataclass
class SelectionResult:
    chosen: list
    objective: float
    per_step_gain: list
    method: str
    scales: list = field(default_factory=list)
    clamped: bool = False


def _clamp(budget: int, n: int):
    if budget < 1:
        raise DomainError(f"budget must be >= 1, got {budget}")
    return (n, True) if budget > n else (budget, False)


def _argmax_unchosen(gains: np.ndarray, taken: np.ndarray) -> int:
    masked = np.where(taken, -np.inf, gains)
    return int(np.argmax(masked))  # first maximum = lowest position


def greedy_probcover_multi(graphs, weights, budget: int, method: str = "mers-probcover") -> SelectionResult:
    """Greedy weighted max-coverage over per-embedding ball graphs."""
    _check_weights(graphs, weights)
    n = graphs[0].n
    b, clamped = _clamp(budget, n)
    state = CoverageState.fresh(n, weights)
    taken = np.zeros(n, dtype=bool)
    chosen, gains_log = [], []
    for _ in range(b):
        gains = state.gains(graphs)
        j = _argmax_unchosen(gains, taken)
        chosen.append(j)
        gains_log.append(float(gains[j]))
        taken[j] = True
        state.cover(graphs, j)
    objective = coverage_value(chosen, graphs, weights)
    return SelectionResult(chosen, objective, gains_log, method, clamped=clamped)


def herding_gains(K: np.ndarray, c: np.ndarray) -> np.ndarray:
    """``G(x_j) = (1/n) sum_i max(K[i, j] - c_i, 0)`` for every column j.

    Column sums are exactly rounded (``math.fsum``), so the result does not
    depend on summation order.
    """
    n = K.shape[0]
    excess = np.maximum(K - c[:, None], 0.0).T
    return np.array([math.fsum(row) for row in excess]) / n


def greedy_maxherding_multi(kernel: KernelMatrix, budget: int, method: str = "mers-maxherding") -> SelectionResult:
    """Greedy soft coverage on a (combined) kernel with running max similarity c."""
    K = kernel.values
    n = K.shape[0]
    b, clamped = _clamp(budget, n)
    c = np.zeros(n)
    taken = np.zeros(n, dtype=bool)
    chosen, gains_log = [], []
    for _ in range(b):
        gains = herding_gains(K, c)
        j = _argmax_unchosen(gains, taken)
        chosen.append(j)
        gains_log.append(float(gains[j]))
        taken[j] = True
        c = np.maximum(c, K[:, j])
    objective = math.fsum(c) / n
    return SelectionResult(chosen, objective, gains_log, method, clamped=clamped)


def greedy_probcover(graph, budget: int) -> SelectionResult:
    return greedy_probcover_multi([graph], [1.0], budget, method="probcover")


def greedy_maxherding(kernel: KernelMatrix, budget: int) -> SelectionResult:
    return greedy_maxherding_multi(kernel, budget, method="maxherding")


def herding_baseline(points: np.ndarray, budget: int) -> SelectionResult:
    """Pick points one at a time so the running mean tracks the class mean.

    ``per_step_gain`` records the residual ``||mu - mean(S)||`` after each step;
    ``objective`` is the final residual.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    b, clamped = _clamp(budget, n)
    mu = X.mean(axis=0)
    running = np.zeros(X.shape[1])
    taken = np.zeros(n, dtype=bool)
    chosen, residuals = [], []
    for t in range(1, b + 1):
        means = (running[None, :] + X) / t
        resid = np.linalg.norm(mu[None, :] - means, axis=1)
        j = _argmax_unchosen(-resid, taken)
        chosen.append(j)
        residuals.append(float(resid[j]))
        taken[j] = True
        running = running + X[j]
    return SelectionResult(chosen, residuals[-1], residuals, "herding", clamped=clamped)


def random_baseline(n: int, budget: int, seed) -> SelectionResult:
    b, clamped = _clamp(budget, n)
    rng = np.random.default_rng(seed)
    chosen = [int(i) for i in rng.choice(n, size=b, replace=False)]
    return SelectionResult(chosen, 0.0, [], "random", clamped=clamped)


def brute_force_max_coverage(graphs, weights, budget: int):
    """Exact maximiser of F over all size-``budget`` subsets (lexicographically first on ties)."""
    _check_weights(graphs, weights)
    n = graphs[0].n
    b = min(budget, n)
    if math.comb(n, b) > ORACLE_LIMIT:
        raise OracleRefusal(f"C({n}, {b}) = {math.comb(n, b)} subsets exceeds the oracle limit {ORACLE_LIMIT}")
    best, best_val = None, -math.inf
    for combo in itertools.combinations(range(n), b):
        val = coverage_value(combo, graphs, weights)
        if val > best_val:
            best, best_val = combo, val
    return list(best), best_val
