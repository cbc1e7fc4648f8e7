"""Density-based pseudo-labeling over normalized features.

Classic DBSCAN on cosine distance: a core point has at least ``min_pts``
neighbors within ``eps`` (itself included), clusters are maximal
density-connected sets, and points reachable from no core point are
outliers with label -1. Scan order is ascending index throughout, so
border points join the first core cluster that reaches them and the
whole labeling is reproducible. Cluster ids are dense, numbered by order
of first appearance.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

__all__ = ["PseudoLabels", "pairwise_cosine_dist", "dbscan"]

OUTLIER = -1


@dataclass
class PseudoLabels:
    labels: np.ndarray  # (N,) int64; cluster id >= 0 or -1 for outliers
    num_clusters: int

    @property
    def outlier_count(self) -> int:
        return int(np.sum(self.labels == OUTLIER))

    @property
    def clustered_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)


def pairwise_cosine_dist(features: np.ndarray) -> np.ndarray:
    """``d[i][j] = 1 - f_i . f_j`` for unit-norm rows; clamped to [0, 2].

    Inputs are required to be normalized (checked to 1e-6) so the dot
    product is a true cosine; the matrix is exactly symmetric with a
    zero diagonal.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("features must be a (N, D) array")
    if features.shape[0]:
        norms = np.linalg.norm(features, axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError("features must be unit-norm (tolerance 1e-6)")
    dist = 1.0 - features @ features.T
    dist = (dist + dist.T) / 2.0  # kill BLAS round-off asymmetry
    np.clip(dist, 0.0, 2.0, out=dist)
    np.fill_diagonal(dist, 0.0)
    return dist


def dbscan(features: np.ndarray, eps: float, min_pts: int) -> PseudoLabels:
    """Cluster unit-norm features; returns dense labels with -1 outliers."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n == 0:
        return PseudoLabels(labels=np.empty(0, dtype=np.int64), num_clusters=0)

    dist = pairwise_cosine_dist(features)
    within = dist <= eps
    neighbor_counts = within.sum(axis=1)  # self included: diagonal distance is 0
    core = neighbor_counts >= min_pts

    labels = np.full(n, OUTLIER, dtype=np.int64)
    cluster_id = 0
    for seed in range(n):
        if not core[seed] or labels[seed] >= 0:
            continue
        labels[seed] = cluster_id
        queue = deque([seed])
        while queue:
            point = queue.popleft()
            for nb in np.flatnonzero(within[point]):
                if labels[nb] >= 0:
                    continue
                labels[nb] = cluster_id
                if core[nb]:
                    queue.append(nb)
        cluster_id += 1
    return PseudoLabels(labels=labels, num_clusters=cluster_id)
