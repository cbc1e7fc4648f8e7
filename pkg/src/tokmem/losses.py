"""The three contrastive losses and their analytic gradients.

All three share one functional form: a temperature-scaled softmax
cross-entropy over a positive similarity and a set of negative
similarities,

    value = -log( exp(s_pos/t) / sum_j exp(s_j/t) ),

evaluated with the max-shifted log-sum-exp so the value stays finite for
similarity/temperature ratios up to +-1000 and far beyond.

* token-constraint loss: positive is the patch token most similar to the
  image feature, negatives are its R least similar tokens; gradients
  flow into the image feature AND the selected tokens (both are live
  encoder outputs).
* prototype-contrast loss: positive is the anchor's own cluster
  prototype, the denominator runs over ALL prototypes; prototypes are
  gradient constants.
* anchor-contrast loss: positive is the hardest (least similar)
  same-cluster instance, negatives the most similar cross-cluster
  instances; memory entries are gradient constants.

Selection (argmax / argmin / top-k) happens outside the differentiated
graph: gradients treat the selected set as fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .memory import PrototypeMemory

__all__ = ["LossOutput", "patch_rate", "select_constraint_tokens",
           "constraint_loss", "prototype_loss", "anchor_loss", "total_loss",
           "scatter_token_gradients"]


@dataclass
class LossOutput:
    """value is a non-negative negative-log-probability.

    ``grad_tokens`` is present for the token-constraint loss only; its
    rows follow the call's token arguments: row 0 is the positive token,
    rows 1.. are the negatives in argument order.
    """

    value: float
    grad_image_feature: np.ndarray
    grad_tokens: np.ndarray | None = None


def patch_rate(num_patches: int, rate: float) -> int:
    """Number of negative tokens: floor(I * rate), clamped to at least 1.

    Without the clamp a small I * rate would select zero negatives and
    make the constraint loss identically zero.
    """
    if num_patches < 1:
        raise ValueError("num_patches must be >= 1")
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    return max(1, math.floor(num_patches * rate))


def select_constraint_tokens(image_feature: np.ndarray, tokens: np.ndarray,
                             rate: float) -> tuple[int, np.ndarray]:
    """Pick the most similar token as positive and the R least similar as
    negatives (ascending similarity), positive excluded, ties to the
    lowest index."""
    tokens = np.asarray(tokens, dtype=np.float64)
    num = tokens.shape[0]
    r = patch_rate(num, rate)
    if num <= r:
        raise ValueError(f"need more than {r} tokens to pick {r} negatives, got {num}")
    sims = tokens @ np.asarray(image_feature, dtype=np.float64)
    pos = int(np.argmax(sims))  # first max = lowest index on ties
    order = np.argsort(sims, kind="stable")
    negs = order[order != pos][:r]
    return pos, negs.astype(np.int64)


def _softmax_ce(sims: np.ndarray, temperature: float) -> tuple[float, np.ndarray]:
    """(-log softmax[0], softmax weights) over sims/temperature, max-shifted."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    z = np.asarray(sims, dtype=np.float64) / temperature
    shift = z.max()
    exp = np.exp(z - shift)
    total = exp.sum()
    value = float(np.log(total) + shift - z[0])
    return value, exp / total


def constraint_loss(image_feature: np.ndarray, pos_token: np.ndarray,
                    neg_tokens: np.ndarray, temperature: float) -> LossOutput:
    """Softmax cross-entropy pulling the image feature toward its best
    token and away from the selected negatives.

    With softmax weights w over [pos] + negs:
      d/d f      = (1/t) [(w_0 - 1) pos + sum_r w_r neg_r]
      d/d pos    = (1/t) (w_0 - 1) f
      d/d neg_r  = (1/t) w_r f
    """
    f = np.asarray(image_feature, dtype=np.float64)
    pos = np.asarray(pos_token, dtype=np.float64)
    negs = np.atleast_2d(np.asarray(neg_tokens, dtype=np.float64))
    sims = np.concatenate(([pos @ f], negs @ f))
    value, w = _softmax_ce(sims, temperature)
    coeff = w.copy()
    coeff[0] -= 1.0
    stacked = np.vstack([pos[None, :], negs])
    grad_f = (coeff @ stacked) / temperature
    grad_tokens = np.outer(coeff, f) / temperature
    return LossOutput(value=value, grad_image_feature=grad_f, grad_tokens=grad_tokens)


def prototype_loss(image_feature: np.ndarray, protos: PrototypeMemory,
                   label: int, temperature: float) -> LossOutput:
    """Softmax cross-entropy of the anchor against every cluster prototype.

    d/d f = (1/t) sum_c (w_c - [c == label]) p_c; prototypes carry no
    gradient.
    """
    if not 0 <= label < protos.num_clusters:
        raise ValueError(f"label {label} out of range [0, {protos.num_clusters})")
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    f = np.asarray(image_feature, dtype=np.float64)
    sims = protos.prototypes @ f
    z = sims / temperature
    shift = z.max()
    exp = np.exp(z - shift)
    total = exp.sum()
    value = float(np.log(total) + shift - z[label])
    coeff = exp / total
    coeff[label] -= 1.0
    grad_f = (coeff @ protos.prototypes) / temperature
    return LossOutput(value=value, grad_image_feature=grad_f)


def anchor_loss(image_feature: np.ndarray, positive: np.ndarray,
                negatives: np.ndarray, temperature: float) -> LossOutput:
    """Same softmax cross-entropy form as the constraint loss, but the
    positive/negative features are memory constants: only the image
    feature receives a gradient."""
    f = np.asarray(image_feature, dtype=np.float64)
    pos = np.asarray(positive, dtype=np.float64)
    negs = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if negs.shape[0] < 1:
        raise ValueError("need at least one negative")
    sims = np.concatenate(([pos @ f], negs @ f))
    value, w = _softmax_ce(sims, temperature)
    coeff = w.copy()
    coeff[0] -= 1.0
    stacked = np.vstack([pos[None, :], negs])
    grad_f = (coeff @ stacked) / temperature
    return LossOutput(value=value, grad_image_feature=grad_f)


def total_loss(constraint: LossOutput | None, prototype: LossOutput | None,
               anchor: LossOutput | None, weight_constraint: float,
               weight_prototype: float, weight_anchor: float) -> LossOutput:
    """Weighted sum of the three terms; a None term contributes nothing.

    token gradients pass through scaled by the constraint weight.
    """
    for name, weight in (("weight_constraint", weight_constraint),
                         ("weight_prototype", weight_prototype),
                         ("weight_anchor", weight_anchor)):
        if weight < 0:
            raise ValueError(f"{name} must be >= 0")
    terms = [(constraint, weight_constraint), (prototype, weight_prototype),
             (anchor, weight_anchor)]
    present = [t for t, _ in terms if t is not None]
    if not present:
        raise ValueError("at least one loss term is required")
    value = sum(w * t.value for t, w in terms if t is not None)
    grad_f = np.zeros_like(present[0].grad_image_feature)
    for t, w in terms:
        if t is not None:
            grad_f = grad_f + w * t.grad_image_feature
    grad_tokens = None
    if constraint is not None and constraint.grad_tokens is not None:
        grad_tokens = weight_constraint * constraint.grad_tokens
    return LossOutput(value=float(value), grad_image_feature=grad_f,
                      grad_tokens=grad_tokens)


def scatter_token_gradients(grad_selected: np.ndarray, pos_index: int,
                            neg_indices: np.ndarray, num_tokens: int) -> np.ndarray:
    """Expand per-selected-token gradients (row 0 = positive) to a full
    (num_tokens, D) array with zeros at unselected rows."""
    grad_selected = np.asarray(grad_selected, dtype=np.float64)
    if grad_selected.shape[0] != 1 + len(neg_indices):
        raise ValueError("grad_selected rows must cover the positive plus each negative")
    full = np.zeros((num_tokens, grad_selected.shape[1]))
    full[pos_index] = grad_selected[0]
    full[np.asarray(neg_indices, dtype=np.int64)] = grad_selected[1:]
    return full
