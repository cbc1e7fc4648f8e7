"""Epoch-based training loop over the full pipeline.

Per epoch: re-encode the whole dataset with the current encoder, cluster
the fresh features into pseudo-labels, rebuild the instance memory from
them (stale features would poison the clustering), and compute cluster
prototypes. Per iteration: encode a batch of clustered anchors, compute
the three losses against a frozen memory snapshot, momentum-update both
memories with the freshly encoded batch features, then apply one plain
SGD step. Memory updates never run before all batch losses are computed,
and gradients are reduced in fixed batch order, so a config reproduces
bit-identically on one platform.

Outlier-labeled samples never appear as anchors (they have no prototype
to serve as a positive) but stay in the instance memory as negative
candidates.

Randomness: encoder init uses Philox keyed by the config seed; the epoch
shuffle uses Philox keyed by (seed, 1 + epoch) so the two streams never
collide.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import cluster as cluster_mod
from . import encoder as encoder_mod
from . import losses as losses_mod
from . import memory as memory_mod
from .errors import NumericError
from .synth import SynthDataset

__all__ = ["TrainConfig", "TrainResult", "learning_rate", "sample_batches",
           "encode_dataset", "train"]

logger = logging.getLogger(__name__)

_MAX_SEED = 2**64


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.05
    lr_decay_every: int = 20
    lr_decay_factor: float = 0.1
    temperature: float = 0.05
    momentum: float = 0.2
    neg_token_rate: float = 0.075   # fraction of tokens used as constraint negatives
    num_negatives: int = 4          # cross-cluster negatives per anchor
    weight_constraint: float = 1.0
    weight_prototype: float = 1.0
    weight_anchor: float = 1.0
    dbscan_eps: float = 0.15
    dbscan_min_pts: int = 4
    seed: int = 42
    feature_dim: int = 32
    patch_input_dim: int = 16
    patches_per_image: int = 16
    part_tokens: int = 3
    anchor_include_outliers: bool = True

    def validate(self) -> None:
        checks = [
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.lr > 0, "lr must be positive"),
            (self.lr_decay_every >= 1, "lr_decay_every must be >= 1"),
            (self.lr_decay_factor > 0, "lr_decay_factor must be positive"),
            (self.temperature > 0, "temperature must be positive"),
            (0 <= self.momentum <= 1, "momentum must be in [0, 1]"),
            (0 < self.neg_token_rate <= 1, "neg_token_rate must be in (0, 1]"),
            (self.num_negatives >= 1, "num_negatives must be >= 1"),
            (self.weight_constraint >= 0, "weight_constraint must be >= 0"),
            (self.weight_prototype >= 0, "weight_prototype must be >= 0"),
            (self.weight_anchor >= 0, "weight_anchor must be >= 0"),
            (self.dbscan_eps > 0, "dbscan_eps must be positive"),
            (self.dbscan_min_pts >= 1, "dbscan_min_pts must be >= 1"),
            (0 <= self.seed < _MAX_SEED, "seed must be a 64-bit unsigned integer"),
            (self.feature_dim >= 2, "feature_dim must be >= 2"),
            (self.patch_input_dim >= 1, "patch_input_dim must be >= 1"),
            (self.part_tokens >= 1, "part_tokens must be >= 1"),
            (self.patches_per_image >= self.part_tokens,
             "patches_per_image must be >= part_tokens"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)


@dataclass
class TrainResult:
    params: encoder_mod.EncoderParams
    log: list[dict] = field(default_factory=list)


def learning_rate(config: TrainConfig, epoch: int) -> float:
    """lr(epoch) = lr0 * factor ** floor(epoch / decay_every), 0-based epochs."""
    return config.lr * config.lr_decay_factor ** (epoch // config.lr_decay_every)


def sample_batches(labels: cluster_mod.PseudoLabels, batch_size: int,
                   seed: int, epoch: int) -> list[np.ndarray]:
    """Shuffle the clustered indices and emit floor(N_clustered / B) full
    batches; outliers never appear. Returns [] (with a warning) when
    fewer than one full batch of clustered samples exists."""
    clustered = labels.clustered_indices
    if clustered.size < batch_size:
        logger.warning("epoch %d skipped: %d clustered samples < batch size %d",
                       epoch, clustered.size, batch_size)
        return []
    key = np.array([seed, 1 + epoch], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    perm = rng.permutation(clustered)
    num_batches = clustered.size // batch_size
    return [perm[b * batch_size:(b + 1) * batch_size] for b in range(num_batches)]


def encode_dataset(params: encoder_mod.EncoderParams,
                   dataset: SynthDataset) -> np.ndarray:
    """Image features for every sample, (N, D)."""
    out = np.empty((dataset.num_samples, params.feature_dim))
    for n in range(dataset.num_samples):
        out[n] = encoder_mod.encode(params, dataset.patches[n]).image_feature
    return out


def _check_dims(config: TrainConfig, dataset: SynthDataset) -> None:
    spec = dataset.spec
    if spec.patch_input_dim != config.patch_input_dim:
        raise ValueError(
            f"dataset patch_input_dim {spec.patch_input_dim} != config {config.patch_input_dim}")
    if spec.patches_per_image != config.patches_per_image:
        raise ValueError(
            f"dataset patches_per_image {spec.patches_per_image} != config {config.patches_per_image}")
    if config.batch_size > dataset.num_samples:
        raise ValueError(
            f"batch_size {config.batch_size} exceeds dataset size {dataset.num_samples}")


def train(config: TrainConfig, dataset: SynthDataset) -> TrainResult:
    """Run the full loop; returns final params plus one log record per epoch.

    Log record keys: epoch, mean_constraint, mean_proto, mean_anchor,
    mean_total, C (cluster count), outliers, lr. Loss means are null for
    a skipped epoch (not enough clustered samples).
    """
    config.validate()
    if dataset.num_samples == 0:
        raise ValueError("dataset is empty")
    _check_dims(config, dataset)

    params = encoder_mod.init_params(config.feature_dim, config.patch_input_dim,
                                     config.part_tokens, config.seed)
    log: list[dict] = []
    for epoch in range(config.epochs):
        lr = learning_rate(config, epoch)
        features = encode_dataset(params, dataset)
        plabels = cluster_mod.dbscan(features, config.dbscan_eps, config.dbscan_min_pts)
        record = {
            "epoch": epoch,
            "mean_constraint": None,
            "mean_proto": None,
            "mean_anchor": None,
            "mean_total": None,
            "C": plabels.num_clusters,
            "outliers": plabels.outlier_count,
            "lr": lr,
        }
        batches = sample_batches(plabels, config.batch_size, config.seed, epoch)
        if not batches or plabels.num_clusters == 0:
            log.append(record)
            continue

        mem = memory_mod.build_instance_memory(features, plabels)
        protos = memory_mod.compute_prototypes(mem)
        sums = {"constraint": 0.0, "proto": 0.0, "anchor": 0.0, "total": 0.0}
        sample_count = 0
        anchor_count = 0
        for iteration, batch in enumerate(batches):
            grads = encoder_mod.EncoderGrads.zeros_like(params)
            batch_features = np.empty((batch.size, config.feature_dim))
            for position, n in enumerate(batch):
                patches = dataset.patches[n]
                out = encoder_mod.encode(params, patches)
                f = out.image_feature
                batch_features[position] = f
                label = int(plabels.labels[n])

                pos_idx, neg_idx = losses_mod.select_constraint_tokens(
                    f, out.patch_tokens, config.neg_token_rate)
                con = losses_mod.constraint_loss(
                    f, out.patch_tokens[pos_idx], out.patch_tokens[neg_idx],
                    config.temperature)
                pro = losses_mod.prototype_loss(f, protos, label, config.temperature)
                anc = None
                if _has_negative_candidates(mem, label, config.anchor_include_outliers):
                    hardest = memory_mod.hardest_positive(mem, f, label)
                    negatives = memory_mod.top_k_negatives(
                        mem, f, label, config.num_negatives,
                        include_outliers=config.anchor_include_outliers)
                    anc = losses_mod.anchor_loss(f, hardest, negatives,
                                                 config.temperature)
                    anchor_count += 1
                total = losses_mod.total_loss(
                    con, pro, anc, config.weight_constraint,
                    config.weight_prototype, config.weight_anchor)
                if not np.isfinite(total.value):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch} iteration {iteration}",
                        diagnostics={
                            "epoch": epoch, "iteration": iteration,
                            "sample": int(n), "constraint": con.value,
                            "proto": pro.value,
                            "anchor": None if anc is None else anc.value,
                            "lr": lr, "C": plabels.num_clusters,
                        })
                grad_tokens = losses_mod.scatter_token_gradients(
                    total.grad_tokens, pos_idx, neg_idx, patches.shape[0])
                grads.add_(encoder_mod.encode_backward(
                    params, patches, total.grad_image_feature, grad_tokens))

                sums["constraint"] += con.value
                sums["proto"] += pro.value
                sums["anchor"] += 0.0 if anc is None else anc.value
                sums["total"] += total.value
                sample_count += 1

            # Momentum updates run strictly after every loss in the batch,
            # in ascending batch order; last writer wins on shared clusters.
            for position, n in enumerate(batch):
                f = batch_features[position]
                memory_mod.momentum_update_prototype(
                    protos, int(plabels.labels[n]), f, config.momentum)
                memory_mod.momentum_update_instance(mem, int(n), f, config.momentum)

            scale = lr / batch.size
            params.w_patch -= scale * grads.w_patch
            params.w_cls -= scale * grads.w_cls
            params.w_part -= scale * grads.w_part

        record["mean_constraint"] = sums["constraint"] / sample_count
        record["mean_proto"] = sums["proto"] / sample_count
        record["mean_anchor"] = (sums["anchor"] / anchor_count) if anchor_count else None
        record["mean_total"] = sums["total"] / sample_count
        log.append(record)
    return TrainResult(params=params, log=log)


def _has_negative_candidates(mem: memory_mod.InstanceMemory, label: int,
                             include_outliers: bool) -> bool:
    cand = mem.labels != label
    if not include_outliers:
        cand &= mem.labels >= 0
    return bool(cand.any())
