"""Instance and prototype memory banks, hard-sample mining, momentum updates.

The instance memory stores one feature per training sample, outliers
included; the prototype memory stores one normalized centroid per
cluster. Memory entries are gradient constants: the trainer reads them
as fixed targets and refreshes them only through the momentum mixing
rule ``stored <- mu * stored + (1 - mu) * fresh`` followed by
re-normalization (without it, mixing shrinks norms and the temperature-
scaled softmaxes drift).

Mining rules: the positive for a clustered anchor is its least similar
same-cluster memory entry; negatives are the k most similar entries of
any other label, outliers included. Ties always break toward the lowest
index via stable sorts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import blobio
from .cluster import OUTLIER, PseudoLabels
from .errors import DataFormatError
from .linalg import l2_normalize, normalize_rows

__all__ = ["InstanceMemory", "PrototypeMemory", "build_instance_memory",
           "compute_prototypes", "hardest_positive", "top_k_negatives",
           "momentum_update_prototype", "momentum_update_instance",
           "save_instance_memory", "load_instance_memory",
           "save_prototype_memory", "load_prototype_memory"]


@dataclass
class InstanceMemory:
    features: np.ndarray  # (N, D), unit rows
    labels: np.ndarray    # (N,) int64, -1 allowed

    @property
    def size(self) -> int:
        return self.features.shape[0]


@dataclass
class PrototypeMemory:
    prototypes: np.ndarray  # (C, D), unit rows

    @property
    def num_clusters(self) -> int:
        return self.prototypes.shape[0]


def build_instance_memory(features: np.ndarray, labels: PseudoLabels) -> InstanceMemory:
    """Store normalized copies of ALL features, outliers included."""
    features = np.asarray(features, dtype=np.float64)
    label_arr = np.asarray(labels.labels, dtype=np.int64)
    if features.shape[0] != label_arr.shape[0]:
        raise ValueError(
            f"{features.shape[0]} features but {label_arr.shape[0]} labels")
    if features.shape[0] == 0:
        return InstanceMemory(features=features.reshape(0, features.shape[-1] if features.ndim == 2 else 0),
                              labels=label_arr.copy())
    return InstanceMemory(features=normalize_rows(features), labels=label_arr.copy())


def compute_prototypes(mem: InstanceMemory) -> PrototypeMemory:
    """Normalized per-cluster centroids over non-outlier members only."""
    clustered = mem.labels >= 0
    if not clustered.any():
        raise ValueError("no clustered samples: every label is -1")
    num_clusters = int(mem.labels.max()) + 1
    protos = np.empty((num_clusters, mem.features.shape[1]))
    for c in range(num_clusters):
        members = mem.features[mem.labels == c]
        if members.shape[0] == 0:
            raise ValueError(f"cluster ids are not dense: no member for cluster {c}")
        protos[c] = members.mean(axis=0)
    return PrototypeMemory(prototypes=normalize_rows(protos))


def hardest_positive(mem: InstanceMemory, feature: np.ndarray, label: int) -> np.ndarray:
    """Least similar same-label memory entry; ties go to the lowest index."""
    if label < 0:
        raise ValueError("anchor label must be a cluster id (>= 0)")
    idx = np.flatnonzero(mem.labels == label)
    if idx.size == 0:
        raise ValueError(f"no memory entry carries label {label}")
    sims = mem.features[idx] @ np.asarray(feature, dtype=np.float64)
    return mem.features[idx[int(np.argmin(sims))]].copy()


def top_k_negatives(mem: InstanceMemory, feature: np.ndarray, label: int, k: int,
                    include_outliers: bool = True) -> np.ndarray:
    """The k most similar entries with a different label, outliers included.

    Returns min(k, candidates) rows in descending similarity; ties break
    toward the lowest index. ``include_outliers=False`` restricts the
    candidate pool to clustered entries (ablation switch).
    """
    if label < 0:
        raise ValueError("anchor label must be a cluster id (>= 0)")
    if k < 1:
        raise ValueError("k must be >= 1")
    cand = mem.labels != label
    if not include_outliers:
        cand &= mem.labels != OUTLIER
    idx = np.flatnonzero(cand)
    if idx.size == 0:
        raise ValueError("no negative candidates in memory")
    sims = mem.features[idx] @ np.asarray(feature, dtype=np.float64)
    order = np.argsort(-sims, kind="stable")[: min(k, idx.size)]
    return mem.features[idx[order]].copy()


def _momentum_mix(stored: np.ndarray, feature: np.ndarray, momentum: float) -> np.ndarray:
    if not 0.0 <= momentum <= 1.0:
        raise ValueError("momentum must be in [0, 1]")
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != stored.shape:
        raise ValueError(f"feature shape {feature.shape} != stored {stored.shape}")
    return l2_normalize(momentum * stored + (1.0 - momentum) * feature)


def momentum_update_prototype(mem: PrototypeMemory, cluster: int,
                              feature: np.ndarray, momentum: float) -> None:
    """In-place: prototypes[cluster] <- normalize(mu*p + (1-mu)*feature)."""
    if not 0 <= cluster < mem.num_clusters:
        raise ValueError(f"cluster {cluster} out of range [0, {mem.num_clusters})")
    mem.prototypes[cluster] = _momentum_mix(mem.prototypes[cluster], feature, momentum)


def momentum_update_instance(mem: InstanceMemory, index: int,
                             feature: np.ndarray, momentum: float) -> None:
    """In-place update of the sample's own slot, same mixing rule."""
    if not 0 <= index < mem.size:
        raise ValueError(f"index {index} out of range [0, {mem.size})")
    mem.features[index] = _momentum_mix(mem.features[index], feature, momentum)


def save_instance_memory(mem: InstanceMemory, prefix) -> None:
    manifest = {"num_entries": mem.size, "feature_dim": mem.features.shape[1]}
    blob = blobio.floats_to_bytes(mem.features) + blobio.ints_to_bytes(mem.labels)
    blobio.write_pair(prefix, manifest, blob)


def load_instance_memory(prefix) -> InstanceMemory:
    manifest, blob = blobio.read_pair(prefix)
    n, d = int(manifest["num_entries"]), int(manifest["feature_dim"])
    if len(blob) != 4 * n * d + 4 * n:
        raise DataFormatError("instance-memory blob length does not match manifest dims")
    features = blobio.floats_from_bytes(blob, n * d).reshape(n, d)
    labels = blobio.ints_from_bytes(blob, n, offset=4 * n * d)
    return InstanceMemory(features=features, labels=labels)


def save_prototype_memory(mem: PrototypeMemory, prefix) -> None:
    manifest = {"num_clusters": mem.num_clusters, "feature_dim": mem.prototypes.shape[1]}
    blobio.write_pair(prefix, manifest, blobio.floats_to_bytes(mem.prototypes))


def load_prototype_memory(prefix) -> PrototypeMemory:
    manifest, blob = blobio.read_pair(prefix)
    c, d = int(manifest["num_clusters"]), int(manifest["feature_dim"])
    if len(blob) != 4 * c * d:
        raise DataFormatError("prototype-memory blob length does not match manifest dims")
    return PrototypeMemory(prototypes=blobio.floats_from_bytes(blob, c * d).reshape(c, d))
