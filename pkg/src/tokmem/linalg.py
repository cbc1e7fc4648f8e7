"""Dense vector helpers shared by every other module.

All in-memory arithmetic is double precision; file I/O downcasts to
float32 at the serialization boundary only. Everything here is a pure
function and thread-safe.
"""

from __future__ import annotations

import warnings
from collections.abc import Callable

import numpy as np

__all__ = [
    "DegenerateNormWarning",
    "l2_normalize",
    "normalize_rows",
    "dot",
    "finite_diff_grad",
    "relative_error",
]


class DegenerateNormWarning(UserWarning):
    """A zero vector could not be normalized and was returned unchanged."""


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Return ``v / ||v||_2`` as a new float64 array.

    A zero vector is returned unchanged (as a copy) with a
    :class:`DegenerateNormWarning`; degenerate inputs must not abort a
    training run.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        warnings.warn("cannot normalize a zero vector; returning it unchanged",
                      DegenerateNormWarning, stacklevel=2)
        return v.copy()
    return v / norm


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """L2-normalize each row of a 2-D array; zero rows pass through with a warning."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    zero = norms == 0.0
    if zero.any():
        warnings.warn("cannot normalize zero rows; returning them unchanged",
                      DegenerateNormWarning, stacklevel=2)
        norms = np.where(zero, 1.0, norms)
    return m / norms[:, None]


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product of two equal-dimension vectors.

    On unit vectors this is the cosine similarity in [-1, 1] up to
    rounding. Dimension mismatch is a hard error.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                     h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient ``(f(x + h e_i) - f(x - h e_i)) / (2h)``.

    This is the numerical oracle every analytic gradient in the package
    is checked against. Raises ValueError naming the coordinate if ``f``
    evaluates to a non-finite value.
    """
    x = np.asarray(x, dtype=np.float64)
    if h <= 0.0:
        raise ValueError("step h must be positive")
    grad = np.empty(x.shape, dtype=np.float64)
    for i in range(x.size):
        xp = x.copy()
        xp.flat[i] += h
        xm = x.copy()
        xm.flat[i] -= h
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite function value at coordinate {i}")
        grad.flat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b|| / max(||a||, ||b||, 1e-12)``, the gradient-check metric."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denom
