"""Reproducible synthetic identity datasets with injected noise patches.

Each identity gets a random unit anchor direction; every clean patch is
that anchor plus Gaussian jitter, and each patch is independently
replaced by an isotropic standard-Gaussian noise patch with probability
``noise_patch_prob``. Noise patches deliberately share the anchors'
coordinate scale so they genuinely distract the encoder.

All randomness comes from numpy's Philox counter-based generator keyed
by the spec seed, so a spec regenerates bit-identically on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import blobio
from .errors import DataFormatError
from .linalg import normalize_rows

__all__ = ["SynthSpec", "SynthDataset", "generate", "split_query_gallery",
           "save_dataset", "load_dataset"]

_MAX_SEED = 2**64


@dataclass(frozen=True)
class SynthSpec:
    num_identities: int
    samples_per_identity: int
    patches_per_image: int
    patch_input_dim: int
    identity_spread: float
    noise_patch_prob: float
    seed: int

    def validate(self) -> None:
        """Raise ValueError naming the first violated field."""
        if self.num_identities < 2:
            raise ValueError("num_identities must be >= 2")
        if self.samples_per_identity < 1:
            raise ValueError("samples_per_identity must be >= 1")
        if self.patches_per_image < 4:
            raise ValueError("patches_per_image must be >= 4")
        if self.patch_input_dim < 1:
            raise ValueError("patch_input_dim must be >= 1")
        if self.identity_spread < 0:
            raise ValueError("identity_spread must be >= 0")
        if not 0.0 <= self.noise_patch_prob < 1.0:
            raise ValueError("noise_patch_prob must be in [0, 1)")
        if not 0 <= self.seed < _MAX_SEED:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def num_samples(self) -> int:
        return self.num_identities * self.samples_per_identity

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class SynthDataset:
    """Immutable after creation; ``patches`` is (N, I, d_in), float64."""

    patches: np.ndarray
    identities: np.ndarray
    spec: SynthSpec

    @property
    def num_samples(self) -> int:
        return self.patches.shape[0]


def generate(spec: SynthSpec) -> SynthDataset:
    """Generate the dataset described by ``spec``; a pure function of the spec."""
    spec.validate()
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    k, spi = spec.num_identities, spec.samples_per_identity
    n, i, d = spec.num_samples, spec.patches_per_image, spec.patch_input_dim

    anchors = normalize_rows(rng.normal(size=(k, d)))
    identities = np.repeat(np.arange(k, dtype=np.int64), spi)
    # Fixed draw order (clean jitter, noise values, noise mask) keeps the
    # stream layout independent of the mask outcome.
    clean = anchors[identities][:, None, :] + spec.identity_spread * rng.normal(size=(n, i, d))
    noise = rng.normal(size=(n, i, d))
    mask = rng.random(size=(n, i)) < spec.noise_patch_prob
    patches = np.where(mask[:, :, None], noise, clean)
    return SynthDataset(patches=patches, identities=identities, spec=spec)


def split_query_gallery(ds: SynthDataset, query_per_identity: int,
                        seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint query/gallery index sets with exactly ``query_per_identity``
    queries drawn per identity, deterministic in ``seed``."""
    spi = ds.spec.samples_per_identity
    if not 0 < query_per_identity < spi:
        raise ValueError(
            f"query_per_identity must be in [1, {spi - 1}], got {query_per_identity}")
    rng = np.random.Generator(np.random.Philox(key=seed))
    query: list[np.ndarray] = []
    for k in range(ds.spec.num_identities):
        idx = np.flatnonzero(ds.identities == k)
        perm = rng.permutation(idx)
        query.append(perm[:query_per_identity])
    query_idx = np.sort(np.concatenate(query))
    mask = np.ones(ds.num_samples, dtype=bool)
    mask[query_idx] = False
    return query_idx, np.flatnonzero(mask)


def save_dataset(ds: SynthDataset, prefix) -> None:
    """Write ``<prefix>.json`` (manifest) and ``<prefix>.f32`` (blob).

    Blob layout: N*I*d_in little-endian float32 patch values in
    sample-major, patch-major, coordinate order, followed by N
    little-endian int32 identity labels.
    """
    manifest = ds.spec.to_dict()
    manifest["num_samples"] = ds.num_samples
    blob = blobio.floats_to_bytes(ds.patches) + blobio.ints_to_bytes(ds.identities)
    blobio.write_pair(prefix, manifest, blob)


def load_dataset(prefix) -> SynthDataset:
    """Read a dataset pair written by :func:`save_dataset`.

    Values come back as float64 (converted from the stored float32).
    """
    manifest, blob = blobio.read_pair(prefix)
    spec = SynthSpec(**{f.name: manifest[f.name] for f in fields(SynthSpec)})
    spec.validate()
    n, i, d = spec.num_samples, spec.patches_per_image, spec.patch_input_dim
    if manifest.get("num_samples") != n:
        raise DataFormatError(
            f"manifest num_samples {manifest.get('num_samples')} does not match spec ({n})")
    expected = 4 * n * i * d + 4 * n
    if len(blob) != expected:
        raise DataFormatError(
            f"dataset blob has {len(blob)} bytes, expected {expected} from manifest fields")
    patches = blobio.floats_from_bytes(blob, n * i * d).reshape(n, i, d)
    identities = blobio.ints_from_bytes(blob, n, offset=4 * n * i * d)
    return SynthDataset(patches=patches, identities=identities, spec=spec)
