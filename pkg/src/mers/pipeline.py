"""Per-class selection: scale estimation followed by the configured selector."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coverage import build_ball_graph, combined_kernel, rbf_kernel_matrix
from .embeddings import pairwise_distances
from .errors import InputError, StructuralError
from .scales import (
    ScaleProfile,
    delta_from_knn,
    embedding_weight,
    median_heuristic_sigma,
    memory_aware_k,
)
from .selectors import (
    METHODS,
    SelectionResult,
    greedy_maxherding_multi,
    greedy_probcover_multi,
    herding_baseline,
    random_baseline,
)

log = logging.getLogger(__name__)


@dataclass
class SelectConfig:
    """Knobs for one selection run. ``None`` means "estimate from data"."""

    method: str = "mers-maxherding"
    metric: str = "cosine"
    weights: list | None = None
    sigma: float | None = None
    delta: float | None = None
    k: int | None = None
    alpha_k: int | None = None
    sigma_scope: str = "class"
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.sigma_scope not in ("class", "episode"):
            raise InputError(f"sigma scope must be 'class' or 'episode', got {self.sigma_scope!r}")


@dataclass
class ClassSelection:
    label: int
    ids: list
    result: SelectionResult
    weights_used: list
    warnings: list = field(default_factory=list)


def thread_count() -> int:
    raw = os.environ.get("MERS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"MERS_THREADS must be an integer, got {raw!r}") from None


def used_views(method: str, n_views: int) -> int:
    """How many leading views a method consumes."""
    if method.startswith("mers-"):
        return n_views
    return 1


def _resolve_k(requested, n, budget, what, warnings):
    if requested is None:
        return memory_aware_k(n, budget)
    if requested > n - 1:
        warnings.append(f"{what} k={requested} exceeds class size - 1; clamped to {n - 1}")
        return n - 1
    return int(requested)


def scale_profiles(points_per_view, names, label, budget, config: SelectConfig, episode_sigma=None):
    """Scale quantities for one class; returns (profiles, distance matrices, warnings)."""
    warnings = []
    n = points_per_view[0].shape[0]
    k = _resolve_k(config.k, n, budget, "delta", warnings)
    ak = _resolve_k(config.alpha_k, n, budget, "alpha", warnings) if config.alpha_k is not None else k
    profiles, dists = [], []
    for m, (pts, name) in enumerate(zip(points_per_view, names)):
        dist = pairwise_distances(pts, config.metric)
        if config.sigma is not None:
            sigma = config.sigma
        elif config.sigma_scope == "episode" and episode_sigma is not None:
            sigma = episode_sigma[m]
        else:
            sigma = median_heuristic_sigma(dist)
        delta = config.delta if config.delta is not None else delta_from_knn(dist, k)
        alpha = embedding_weight(dist, ak)
        profiles.append(ScaleProfile(sigma, delta, alpha, k, name, int(label)))
        dists.append(dist)
    return profiles, dists, warnings


def select_class(points_per_view, names, ids, label, budget, config: SelectConfig, episode_sigma=None) -> ClassSelection:
    """Run scale estimation and the configured selector on one class."""
    ids = [int(i) for i in ids]
    n = len(ids)
    method = config.method
    warnings = []
    M = used_views(method, len(points_per_view))
    if method.startswith("mers-") and M == 1:
        log.info("class %s: one embedding given, %s reduces to its single-embedding form", label, method)

    if method == "random":
        seed = [int(config.seed), int(label) & 0xFFFFFFFF]
        res = random_baseline(n, budget, seed)
        return _finish(label, ids, res, [], warnings)
    if method == "herding":
        res = herding_baseline(points_per_view[0], budget)
        return _finish(label, ids, res, [], warnings)

    if n == 1:
        res = SelectionResult([0], 0.0, [], method, clamped=budget > 1)
        warnings.append("class has a single point; stored without scale estimation")
        return _finish(label, ids, res, [], warnings)

    views, vnames = points_per_view[:M], names[:M]
    profiles, dists, w = scale_profiles(views, vnames, label, min(budget, n), config, episode_sigma)
    warnings.extend(w)
    if M == 1:
        weights = [1.0]
    elif config.weights is not None:
        if len(config.weights) != M:
            raise StructuralError(f"{len(config.weights)} explicit weights for {M} embeddings")
        weights = [float(x) for x in config.weights]
    else:
        weights = [p.alpha for p in profiles]

    if method.endswith("probcover"):
        graphs = [build_ball_graph(d, p.delta, p.embedding_name) for d, p in zip(dists, profiles)]
        res = greedy_probcover_multi(graphs, weights, budget, method=method)
    else:
        kernels = [rbf_kernel_matrix(d, p.sigma) for d, p in zip(dists, profiles)]
        res = greedy_maxherding_multi(combined_kernel(kernels, weights), budget, method=method)
    res.scales = profiles
    return _finish(label, ids, res, weights, warnings)


def _finish(label, ids, res, weights, warnings):
    if res.clamped:
        warnings.append(f"budget exceeds class size {len(ids)}; clamped")
    return ClassSelection(int(label), [ids[j] for j in res.chosen], res, list(weights), warnings)


def episode_sigmas(pool_points, metric):
    """Median-heuristic bandwidth over every point of the episode, per view."""
    return [median_heuristic_sigma(pairwise_distances(p, metric)) for p in pool_points]


def select_pool(pool, budgets: dict, config: SelectConfig, threads: int | None = None):
    """Select per class over a :class:`LabeledPool`; classes fan out over threads.

    ``budgets`` maps class label to per-class budget. Results come back in
    ascending label order regardless of thread count.
    """
    names = [v.name for v in pool.views]
    eps = None
    if config.sigma_scope == "episode" and config.sigma is None:
        eps = episode_sigmas([v.points for v in pool.views], config.metric)

    def run(label):
        rows = pool.class_rows(label)
        pts = [v.points[rows] for v in pool.views]
        return select_class(pts, names, pool.ids[rows], label, budgets[label], config, eps)

    labels = [c for c in pool.classes if budgets.get(c, 0) > 0]
    workers = threads or thread_count()
    if workers <= 1 or len(labels) <= 1:
        return [run(c) for c in labels]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run, labels))
