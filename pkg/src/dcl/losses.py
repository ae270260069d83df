"""The four delta-losses in numerically stable form, plus the original
inner-product spectral contrastive baseline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

DELTA_NCE = "delta-nce"
DELTA_INCE = "delta-ince"
DELTA_SCL = "delta-scl"
DELTA_NWJ = "delta-nwj"
ORIGINAL_SCL = "original-scl"

LOSS_KINDS = (DELTA_NCE, DELTA_INCE, DELTA_SCL, DELTA_NWJ, ORIGINAL_SCL)

DEFAULT_CLAMP_HI = 20.0


@dataclass(frozen=True)
class LossKind:
    kind: str
    k: int = 1  # negatives per anchor (delta-ince); 0 means "batch size - 1"
    clamp_hi: float = DEFAULT_CLAMP_HI

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == DELTA_INCE and self.k < 0:
            raise ValueError("delta-ince needs k >= 1 (or 0 for in-batch)")


def loss_nce(delta_pos: Tensor, delta_neg: Tensor) -> Tensor:
    """mean softplus(d+) + mean softplus(-d-); the stable rewrite of the
    binary logistic objective, no explicit sigmoid."""
    return T.add(T.tmean(T.softplus(delta_pos)),
                 T.tmean(T.softplus(T.neg(delta_neg))))


def loss_ince(delta_pos: Tensor, delta_neg: Tensor) -> Tensor:
    """Row-wise -log softmax of the positive against K negatives, entirely via
    logsumexp.  delta_pos is [B], delta_neg is [B, K]."""
    if delta_neg.data.ndim != 2 or delta_neg.data.shape[1] < 1:
        raise T.ShapeError("loss_ince: negatives must be [B, K] with K >= 1")
    col = T.reshape(delta_pos, (delta_pos.data.shape[0], 1))
    scores = T.neg(T.concat_cols([col, delta_neg]))
    return T.tmean(T.add(T.logsumexp(scores, axis=1), delta_pos))


def loss_scl(delta_pos: Tensor, delta_neg: Tensor,
             clamp_hi: float = DEFAULT_CLAMP_HI) -> Tensor:
    """mean(-2 e^{-d+}) + mean(e^{-2 d-}); exponent arguments clamped above."""
    pos = T.exp(T.clamp(T.neg(delta_pos), hi=clamp_hi))
    neg = T.exp(T.clamp(T.mul(delta_neg, -2.0), hi=clamp_hi))
    return T.add(T.mul(T.tmean(pos), -2.0), T.tmean(neg))


def loss_nwj(delta_pos: Tensor, delta_neg: Tensor,
             clamp_hi: float = DEFAULT_CLAMP_HI) -> Tensor:
    """mean(d+) + mean(e^{-d-}), clamped like loss_scl."""
    neg = T.exp(T.clamp(T.neg(delta_neg), hi=clamp_hi))
    return T.add(T.tmean(delta_pos), T.tmean(neg))


def loss_scl_original(z: Tensor, z_tilde: Tensor, z_neg: Tensor) -> Tensor:
    """Inner-product spectral contrastive baseline:
    mean(-2 <z, z~>) + mean(<z, z->^2) over aligned rows."""
    pos = T.tsum(T.mul(z, z_tilde), axis=1)
    neg = T.tsum(T.mul(z, z_neg), axis=1)
    return T.add(T.mul(T.tmean(pos), -2.0), T.tmean(T.powi(neg, 2.0)))


def clamp_active_count(kind: str, delta_pos: np.ndarray, delta_neg: np.ndarray,
                       clamp_hi: float = DEFAULT_CLAMP_HI) -> int:
    """How many exponent arguments the clamp actually truncated (for logging)."""
    if kind == DELTA_SCL:
        return int((-delta_pos > clamp_hi).sum() + (-2.0 * delta_neg > clamp_hi).sum())
    if kind == DELTA_NWJ:
        return int((-delta_neg > clamp_hi).sum())
    return 0
