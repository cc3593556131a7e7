"""Synthetic point clouds shaped like supervised and self-supervised embeddings."""

from __future__ import annotations

import numpy as np

from .embeddings import EmbeddingView, LabeledPool, l2_normalize
from .theory import equal_volume_alpha


def micro_cluster_cloud(rng, clusters: int = 20, per_cluster: int = 5, dim: int = 8, spread: float = 1e-2):
    """Tight groups of near-duplicates around random centres."""
    centres = rng.standard_normal((clusters, dim))
    pts = np.repeat(centres, per_cluster, axis=0)
    return pts + spread * rng.standard_normal(pts.shape)


def uniform_cloud(rng, n: int = 100, dim: int = 8):
    return rng.uniform(-1.0, 1.0, size=(n, dim))


def two_view_classes(rng, labels, points_per_class: int, dim: int = 8, m: int = 2, sl_beta: float = 0.05,
                     sl_sigma: float = 0.5, sl_alpha: float | None = None, ssl_sigma: float = 0.5,
                     mean_scale: float = 3.0, normalize: bool = True, id_offset: int = 0) -> LabeledPool:
    """Per class: an anisotropic SL-like view and an isotropic SSL-like view.

    The SL view has variance ``alpha`` on ``m`` coordinates and ``beta`` on the
    rest; unless given, ``alpha`` is set so the ellipsoid has the volume of
    ``sl_sigma * I``.
    """
    if sl_alpha is None:
        sl_alpha = equal_volume_alpha(sl_beta, m, dim, sl_sigma)
    scales = np.sqrt(np.r_[np.full(m, sl_alpha), np.full(dim - m, sl_beta)])
    sl, ssl, ys = [], [], []
    for c in labels:
        mu_sl = mean_scale * rng.standard_normal(dim)
        mu_ssl = mean_scale * rng.standard_normal(dim)
        sl.append(mu_sl + rng.standard_normal((points_per_class, dim)) * scales)
        ssl.append(mu_ssl + np.sqrt(ssl_sigma) * rng.standard_normal((points_per_class, dim)))
        ys.append(np.full(points_per_class, c))
    ids = id_offset + np.arange(len(labels) * points_per_class)
    views = [EmbeddingView(np.vstack(sl), ids, "supervised"), EmbeddingView(np.vstack(ssl), ids, "ssl")]
    if normalize:
        views = [l2_normalize(v) for v in views]
    return LabeledPool(views, np.concatenate(ys))
