"""Toy differentiable patch encoder with analytic gradients.

The encoder projects every raw patch through a shared matrix to produce
per-patch token features, and composes the image feature from a global
head applied to the patch mean plus the average of several part heads,
each applied to the mean of one contiguous patch stripe. All outputs are
L2-normalized inside the encoder so every downstream dot product is a
cosine similarity.

``encode_backward`` is the exact analytic adjoint of ``encode`` for a
linear functional of its outputs, including the normalization Jacobian
``(I - u_hat u_hat^T) / ||u||``. Where a pre-normalization vector is zero
(the warning path of ``l2_normalize``), the Jacobian degenerates to the
identity pass-through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import blobio
from .errors import DataFormatError
from .linalg import l2_normalize, normalize_rows

__all__ = ["EncoderParams", "EncodeOutput", "EncoderGrads", "init_params",
           "encode", "encode_backward", "part_slices",
           "flatten_params", "unflatten_params",
           "save_checkpoint", "load_checkpoint"]


@dataclass
class EncoderParams:
    w_patch: np.ndarray  # (D, d_in) shared patch projection
    w_cls: np.ndarray    # (D, d_in) global head
    w_part: np.ndarray   # (Z, D, d_in) part heads

    def __post_init__(self) -> None:
        self.w_patch = np.asarray(self.w_patch, dtype=np.float64)
        self.w_cls = np.asarray(self.w_cls, dtype=np.float64)
        self.w_part = np.asarray(self.w_part, dtype=np.float64)
        d, d_in = self.w_patch.shape
        if d < 2:
            raise ValueError("feature_dim must be >= 2")
        if self.w_cls.shape != (d, d_in):
            raise ValueError("w_cls shape does not match w_patch")
        if self.w_part.ndim != 3 or self.w_part.shape[1:] != (d, d_in) or self.w_part.shape[0] < 1:
            raise ValueError("w_part must be (Z, D, d_in) with Z >= 1")
        for name in ("w_patch", "w_cls", "w_part"):
            if not np.isfinite(getattr(self, name)).all():
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def feature_dim(self) -> int:
        return self.w_patch.shape[0]

    @property
    def patch_input_dim(self) -> int:
        return self.w_patch.shape[1]

    @property
    def part_tokens(self) -> int:
        return self.w_part.shape[0]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.w_patch.copy(), self.w_cls.copy(), self.w_part.copy())


@dataclass
class EncodeOutput:
    image_feature: np.ndarray  # (D,), unit norm
    patch_tokens: np.ndarray   # (I, D), unit rows


@dataclass
class EncoderGrads:
    w_patch: np.ndarray
    w_cls: np.ndarray
    w_part: np.ndarray

    @classmethod
    def zeros_like(cls, params: EncoderParams) -> "EncoderGrads":
        return cls(np.zeros_like(params.w_patch), np.zeros_like(params.w_cls),
                   np.zeros_like(params.w_part))

    def add_(self, other: "EncoderGrads") -> None:
        self.w_patch += other.w_patch
        self.w_cls += other.w_cls
        self.w_part += other.w_part


def init_params(feature_dim: int, patch_input_dim: int, part_tokens: int,
                seed: int) -> EncoderParams:
    """Entries i.i.d. Gaussian with std 1/sqrt(d_in), Philox-keyed by seed."""
    if feature_dim < 2 or patch_input_dim < 1 or part_tokens < 1:
        raise ValueError("encoder dimensions must be positive (feature_dim >= 2)")
    rng = np.random.Generator(np.random.Philox(key=seed))
    std = 1.0 / np.sqrt(patch_input_dim)
    shape = (feature_dim, patch_input_dim)
    return EncoderParams(
        w_patch=std * rng.normal(size=shape),
        w_cls=std * rng.normal(size=shape),
        w_part=std * rng.normal(size=(part_tokens, *shape)),
    )


def part_slices(num_patches: int, part_tokens: int) -> list[slice]:
    """Contiguous equal patch stripes; remainder patches go to the last stripe."""
    if num_patches < part_tokens:
        raise ValueError(f"need at least {part_tokens} patches, got {num_patches}")
    base = num_patches // part_tokens
    out = [slice(z * base, (z + 1) * base) for z in range(part_tokens - 1)]
    out.append(slice((part_tokens - 1) * base, num_patches))
    return out


def encode(params: EncoderParams, patches: np.ndarray) -> EncodeOutput:
    """Forward pass for one image's (I, d_in) patch stack.

    tokens[i] = normalize(W_patch @ patches[i]);
    f = normalize(W_cls @ mean(patches) + mean_z(W_part[z] @ stripe_mean_z)).
    """
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 2 or patches.shape[1] != params.patch_input_dim:
        raise ValueError(f"patches must be (I, {params.patch_input_dim})")
    z = params.part_tokens
    slices = part_slices(patches.shape[0], z)

    tokens = normalize_rows(patches @ params.w_patch.T)
    xbar = patches.mean(axis=0)
    pre = params.w_cls @ xbar
    for wz, sl in zip(params.w_part, slices):
        pre = pre + (wz @ patches[sl].mean(axis=0)) / z
    return EncodeOutput(image_feature=l2_normalize(pre), patch_tokens=tokens)


def _normalize_backward(grad_out: np.ndarray, pre: np.ndarray) -> np.ndarray:
    """Adjoint of v -> v/||v||: (g - (g . v_hat) v_hat) / ||v||; identity at ||v|| = 0."""
    norm = float(np.linalg.norm(pre))
    if norm == 0.0:
        return grad_out.copy()
    unit = pre / norm
    return (grad_out - np.dot(grad_out, unit) * unit) / norm


def encode_backward(params: EncoderParams, patches: np.ndarray,
                    grad_image_feature: np.ndarray,
                    grad_tokens: np.ndarray) -> EncoderGrads:
    """Gradient of <g_f, image_feature> + sum_i <g_t[i], token_i> w.r.t. params.

    The image feature does not depend on ``w_patch``, and the tokens do
    not depend on the head matrices, so the two output gradients touch
    disjoint parameter blocks.
    """
    patches = np.asarray(patches, dtype=np.float64)
    grad_image_feature = np.asarray(grad_image_feature, dtype=np.float64)
    grad_tokens = np.asarray(grad_tokens, dtype=np.float64)
    num_patches = patches.shape[0]
    d = params.feature_dim
    if grad_image_feature.shape != (d,):
        raise ValueError(f"grad_image_feature must be ({d},)")
    if grad_tokens.shape != (num_patches, d):
        raise ValueError(f"grad_tokens must be ({num_patches}, {d})")
    z = params.part_tokens
    slices = part_slices(num_patches, z)

    # Token path: t_i = normalize(W_patch p_i); rowwise normalization adjoint.
    pre_tokens = patches @ params.w_patch.T
    norms = np.linalg.norm(pre_tokens, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    units = pre_tokens / safe
    proj = np.einsum("ij,ij->i", grad_tokens, units)[:, None]
    g_pre_tokens = np.where(norms == 0.0, grad_tokens,
                            (grad_tokens - proj * units) / safe)
    g_w_patch = g_pre_tokens.T @ patches

    # Image-feature path: f = normalize(W_cls xbar + mean_z W_part[z] xbar_z).
    xbar = patches.mean(axis=0)
    stripe_means = [patches[sl].mean(axis=0) for sl in slices]
    pre = params.w_cls @ xbar
    for wz, sm in zip(params.w_part, stripe_means):
        pre = pre + (wz @ sm) / z
    g_pre = _normalize_backward(grad_image_feature, pre)
    g_w_cls = np.outer(g_pre, xbar)
    g_w_part = np.stack([np.outer(g_pre, sm) / z for sm in stripe_means])
    return EncoderGrads(w_patch=g_w_patch, w_cls=g_w_cls, w_part=g_w_part)


def flatten_params(params: EncoderParams) -> np.ndarray:
    return np.concatenate([params.w_patch.ravel(), params.w_cls.ravel(),
                           params.w_part.ravel()])


def unflatten_params(vec: np.ndarray, like: EncoderParams) -> EncoderParams:
    vec = np.asarray(vec, dtype=np.float64)
    sizes = [like.w_patch.size, like.w_cls.size, like.w_part.size]
    if vec.size != sum(sizes):
        raise ValueError("parameter vector has the wrong length")
    a = vec[:sizes[0]].reshape(like.w_patch.shape)
    b = vec[sizes[0]:sizes[0] + sizes[1]].reshape(like.w_cls.shape)
    c = vec[sizes[0] + sizes[1]:].reshape(like.w_part.shape)
    return EncoderParams(a.copy(), b.copy(), c.copy())


def save_checkpoint(params: EncoderParams, prefix) -> None:
    """Manifest records dims; blob is w_patch, w_cls, w_part[0..Z-1] as float32."""
    manifest = {
        "feature_dim": params.feature_dim,
        "patch_input_dim": params.patch_input_dim,
        "part_tokens": params.part_tokens,
    }
    blob = (blobio.floats_to_bytes(params.w_patch)
            + blobio.floats_to_bytes(params.w_cls)
            + blobio.floats_to_bytes(params.w_part))
    blobio.write_pair(prefix, manifest, blob)


def load_checkpoint(prefix) -> EncoderParams:
    manifest, blob = blobio.read_pair(prefix)
    try:
        d = int(manifest["feature_dim"])
        d_in = int(manifest["patch_input_dim"])
        z = int(manifest["part_tokens"])
    except KeyError as exc:
        raise DataFormatError(f"checkpoint manifest missing field {exc}") from exc
    mat = d * d_in
    expected = 4 * mat * (2 + z)
    if len(blob) != expected:
        raise DataFormatError(
            f"checkpoint blob has {len(blob)} bytes, expected {expected} from manifest dims")
    w_patch = blobio.floats_from_bytes(blob, mat).reshape(d, d_in)
    w_cls = blobio.floats_from_bytes(blob, mat, offset=4 * mat).reshape(d, d_in)
    w_part = blobio.floats_from_bytes(blob, mat * z, offset=8 * mat).reshape(z, d, d_in)
    return EncoderParams(w_patch, w_cls, w_part)
