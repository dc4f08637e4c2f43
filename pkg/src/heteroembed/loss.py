"""Margin losses over embedding tuples.

Implements the vanilla triplet loss, its mean-negative variant, the
within-domain and cross-domain terms, their sum, and analytic
subgradients with respect to every participating embedding. Distances
are squared Euclidean throughout; each hinge is clipped to 0
independently and contributes gradient only when strictly active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import ShapeError


@dataclass(frozen=True)
class Margins:
    alpha1: float = 0.4
    alpha2: float = 0.4

    def __post_init__(self):
        if not (np.isfinite(self.alpha1) and np.isfinite(self.alpha2)):
            raise ValueError("margins must be finite")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("margins must be >= 0")


@dataclass
class EmbeddingTuple:
    """Anchor, same/cross-domain positives, and per-domain negative sets.

    All negatives come from a single negative identity (enforced by the
    sampler, not here).
    """

    anchor: np.ndarray
    pos_same: np.ndarray
    pos_cross: np.ndarray
    negs_same: list[np.ndarray]
    negs_cross: list[np.ndarray]

    def validate(self):
        if not self.negs_same or not self.negs_cross:
            raise ValueError("negative sets must be nonempty")
        dim = self.anchor.shape
        for v in (self.pos_same, self.pos_cross, *self.negs_same, *self.negs_cross):
            if v.shape != dim:
                raise ShapeError(f"embedding shape {v.shape} != anchor shape {dim}")


@dataclass
class LossValue:
    l1: float
    l2: float
    total: float
    l1_active: bool
    l2_active: bool


@dataclass
class LossGrad:
    d_anchor: np.ndarray
    d_pos_same: np.ndarray
    d_pos_cross: np.ndarray
    d_negs_same: list[np.ndarray]
    d_negs_cross: list[np.ndarray]


def _sqdist(x: np.ndarray, y: np.ndarray) -> float:
    if x.shape != y.shape:
        raise ShapeError(f"dim mismatch {x.shape} vs {y.shape}")
    d = x - y
    return float(d @ d)


def triplet_loss(anchor, positive, negative, alpha: float) -> float:
    """max(0, d2(a,p) - d2(a,n) + alpha) with squared Euclidean d2."""
    return max(0.0, _sqdist(anchor, positive) - _sqdist(anchor, negative) + alpha)


def mean_embedding(vectors) -> np.ndarray:
    """Component-wise mean of a nonempty set of equal-dim vectors.

    Summation runs in a canonical (lexicographically sorted) order so the
    result is bit-identical under any permutation of the input.
    """
    vectors = list(vectors)
    if not vectors:
        raise ValueError("mean_embedding of empty set")
    dim = vectors[0].shape
    for v in vectors[1:]:
        if v.shape != dim:
            raise ShapeError("mean_embedding over mixed dims")
    stack = np.stack(vectors)
    order = np.lexsort(stack.T[::-1])
    return stack[order].sum(axis=0) / len(vectors)


def loss_l1(tup: EmbeddingTuple, alpha1: float) -> float:
    """Within-domain term: anchor vs same-domain positive vs mean same-domain negative."""
    tup.validate()
    m = mean_embedding(tup.negs_same)
    return max(0.0, _sqdist(tup.anchor, tup.pos_same) - _sqdist(tup.anchor, m) + alpha1)


def loss_l2(tup: EmbeddingTuple, alpha2: float) -> float:
    """Cross-domain term: anchor vs cross-domain positive vs mean cross-domain negative."""
    tup.validate()
    m = mean_embedding(tup.negs_cross)
    return max(0.0, _sqdist(tup.anchor, tup.pos_cross) - _sqdist(tup.anchor, m) + alpha2)


def hetero_loss(tup: EmbeddingTuple, margins: Margins) -> LossValue:
    """Both hinge terms, clipped independently, and their sum."""
    l1 = loss_l1(tup, margins.alpha1)
    l2 = loss_l2(tup, margins.alpha2)
    return LossValue(l1=l1, l2=l2, total=l1 + l2, l1_active=l1 > 0, l2_active=l2 > 0)


def hetero_loss_grad(tup: EmbeddingTuple, margins: Margins) -> tuple[LossValue, LossGrad]:
    """Loss plus analytic subgradients w.r.t. every embedding in the tuple.

    An inactive hinge (argument <= 0) contributes nothing; each negative in
    a mean receives 1/k of the mean's gradient.
    """
    value = hetero_loss(tup, margins)
    a = tup.anchor
    d_anchor = np.zeros_like(a)
    d_pos_same = np.zeros_like(a)
    d_pos_cross = np.zeros_like(a)
    d_negs_same = [np.zeros_like(a) for _ in tup.negs_same]
    d_negs_cross = [np.zeros_like(a) for _ in tup.negs_cross]

    if value.l1_active:
        m1 = mean_embedding(tup.negs_same)
        d_anchor += 2.0 * (m1 - tup.pos_same)
        d_pos_same = -2.0 * (a - tup.pos_same)
        per_neg = 2.0 * (a - m1) / len(tup.negs_same)
        for g in d_negs_same:
            g += per_neg
    if value.l2_active:
        m2 = mean_embedding(tup.negs_cross)
        d_anchor += 2.0 * (m2 - tup.pos_cross)
        d_pos_cross = -2.0 * (a - tup.pos_cross)
        per_neg = 2.0 * (a - m2) / len(tup.negs_cross)
        for g in d_negs_cross:
            g += per_neg

    grad = LossGrad(
        d_anchor=d_anchor,
        d_pos_same=d_pos_same,
        d_pos_cross=d_pos_cross,
        d_negs_same=d_negs_same,
        d_negs_cross=d_negs_cross,
    )
    return value, grad


def triplet_loss_grad(anchor, positive, negative, alpha: float):
    """Loss and subgradients for the single-negative triplet baseline."""
    val = triplet_loss(anchor, positive, negative, alpha)
    d_a = np.zeros_like(anchor)
    d_p = np.zeros_like(anchor)
    d_n = np.zeros_like(anchor)
    if val > 0:
        d_a = 2.0 * (negative - positive)
        d_p = -2.0 * (anchor - positive)
        d_n = 2.0 * (anchor - negative)
    return val, d_a, d_p, d_n
