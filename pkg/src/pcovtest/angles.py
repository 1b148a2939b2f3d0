"""Angle geometry between difference vectors.

The dependence estimators only ever look at the data through angles of
the form ∠(X_i − X_k, X_l − X_k), where ∠(x, y) = arccos(x·y / (|x||y|))
lies in [0, π] and is defined as 0 whenever either argument is the zero
vector.  This module provides the scalar angle, the B×B×B tensor of all
such angles for one subgroup of rows, and a batched tensor builder used
by the estimators (one tensor per moving window, computed from window
Gram matrices so no explicit difference vectors are formed).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ValidationError

# Norms at or below this are treated as the zero vector; keeps the
# zero-vector convention robust against denormal underflow.
ZERO_NORM_FLOOR = 1e-300


@dataclass(frozen=True)
class AngleTensor:
    """All angles ∠(row_i − row_k, row_l − row_k) of one subgroup.

    values[i, k, l] is the angle for the triple (i, k, l); entries with
    i == k or l == k are 0 by the zero-vector convention.
    """

    B: int
    values: np.ndarray  # shape (B, B, B), entries in [0, pi]


def angle(x, y) -> float:
    """Angle between two vectors in [0, π]; 0 if either vector is zero.

    The cosine ratio is clamped to [−1, 1] before arccos so that
    floating-point rounding can never produce a NaN.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise DimensionMismatchError(
            f"angle expects two vectors of equal length, got shapes {x.shape} and {y.shape}"
        )
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValidationError("angle requires finite inputs")
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx < ZERO_NORM_FLOOR or ny < ZERO_NORM_FLOOR:
        return 0.0
    if np.array_equal(x, y):
        return 0.0  # a vector and itself: exactly 0, skip arccos rounding
    c = float(np.dot(x, y)) / (nx * ny)
    return float(np.arccos(min(1.0, max(-1.0, c))))


def tensors_from_grams(gram: np.ndarray) -> np.ndarray:
    """Angle tensors from Gram matrices of subgroup rows.

    gram has shape (..., B, B) with gram[..., a, b] = <row_a, row_b>.
    Returns (..., B, B, B) with entry (i, k, l) equal to
    ∠(row_i − row_k, row_l − row_k), using

        (x_i − x_k)·(x_l − x_k) = G_il − G_ik − G_kl + G_kk
        |x_i − x_k|²            = G_ii − 2 G_ik + G_kk.

    Rows should be centered beforehand (any common shift leaves the
    angles unchanged and improves the conditioning of these identities).
    """
    g_diag = np.diagonal(gram, axis1=-2, axis2=-1)
    d2 = g_diag[..., :, None] - 2.0 * gram + g_diag[..., None, :]
    np.maximum(d2, 0.0, out=d2)  # cancellation can leave tiny negatives
    nm = np.sqrt(d2)  # nm[..., i, k] = |x_i - x_k|

    ip = (
        gram[..., :, None, :]
        - gram[..., :, :, None]
        - gram[..., None, :, :]
        + g_diag[..., None, :, None]
    )
    nm_t = np.swapaxes(nm, -2, -1)
    den = nm[..., :, :, None] * nm_t[..., None, :, :]

    zero = nm <= ZERO_NORM_FLOOR
    zero_t = np.swapaxes(zero, -2, -1)
    mask = zero[..., :, :, None] | zero_t[..., None, :, :]
    mask |= den <= 0.0  # underflowed products count as zero vectors too

    with np.errstate(divide="ignore", invalid="ignore"):
        cos = ip / den
    np.clip(cos, -1.0, 1.0, out=cos)
    values = np.arccos(cos)
    values[mask] = 0.0
    # Entries (i, k, i) compare a difference vector with itself: exactly 0.
    # Rounding in the Gram identities would otherwise leave arccos noise
    # of order 1e-8 here (arccos is ill-conditioned at cosine 1).
    idx = np.arange(values.shape[-1])
    values[..., idx[:, None], idx[None, :], idx[:, None]] = 0.0
    return values


def tensors_from_deltas_1d(delta: np.ndarray) -> np.ndarray:
    """Angle tensors for one-column index sets, from difference scalars.

    delta has shape (..., B, B) with delta[..., i, k] = x_i − x_k in the
    single retained coordinate.  One-coordinate difference vectors are all
    collinear, so every angle is exactly 0 or π: π when the two differences
    have strictly opposite signs, 0 otherwise (including the zero-vector
    convention).  Working from signs keeps these endpoint angles exact
    instead of leaving them to arccos rounding.
    """
    zero = np.abs(delta) < ZERO_NORM_FLOOR
    neg = delta < 0
    zero_t = np.swapaxes(zero, -2, -1)
    neg_t = np.swapaxes(neg, -2, -1)
    nonzero = ~(zero[..., :, :, None] | zero_t[..., None, :, :])
    opposite = neg[..., :, :, None] ^ neg_t[..., None, :, :]
    return np.where(nonzero & opposite, np.pi, 0.0)


def angle_tensor(block) -> AngleTensor:
    """AngleTensor for one subgroup of rows (B×p matrix), B ≥ 2."""
    block = np.asarray(block, dtype=float)
    if block.ndim != 2:
        raise ValidationError("angle_tensor expects a 2-D block of rows")
    B = block.shape[0]
    if B < 2:
        raise ValidationError(f"angle_tensor needs at least 2 rows, got {B}")
    if not np.isfinite(block).all():
        raise ValidationError("angle_tensor requires finite inputs")
    centered = block - block.mean(axis=0)
    if centered.shape[1] == 1:
        col = centered[:, 0]
        values = tensors_from_deltas_1d(col[:, None] - col[None, :])
    else:
        values = tensors_from_grams(centered @ centered.T)
    return AngleTensor(B=B, values=values)
