"""Class prototypes, the momentum memory bank and the two training losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pc_io import NUM_CLASSES


def eval_mask(labels, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Points whose label is an evaluation class (IGNORED/INVALID excluded)."""
    labels = np.asarray(labels)
    return (labels >= 0) & (labels < num_classes)


def class_average(f_w, labels, num_classes: int = NUM_CLASSES):
    """Mean embedding per class.

    Returns ``(means, present)`` with ``means`` of shape ``(D, C)``; columns
    of absent classes are zero and flagged ``False`` in ``present``.
    """
    f_w = np.asarray(f_w, dtype=np.float64)
    labels = np.asarray(labels)
    D = f_w.shape[1]
    keep = eval_mask(labels, num_classes)
    counts = np.bincount(labels[keep], minlength=num_classes)
    sums = np.zeros((num_classes, D))
    np.add.at(sums, labels[keep], f_w[keep])
    present = counts > 0
    means = np.zeros((num_classes, D))
    means[present] = sums[present] / counts[present, None]
    return means.T, present


class MemoryBank:
    """``D x C`` class prototypes, momentum-updated and never differentiated.

    A column is written directly on the first observation of its class and
    momentum-updated afterwards.
    """

    def __init__(self, embed_dim: int, num_classes: int = NUM_CLASSES, momentum: float = 0.99):
        if not 0.0 <= momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        self.B = np.zeros((embed_dim, num_classes))
        self.initialized = np.zeros(num_classes, dtype=bool)
        self.momentum = float(momentum)

    @property
    def shape(self):
        return self.B.shape

    def copy(self) -> "MemoryBank":
        out = MemoryBank(*self.B.shape, momentum=self.momentum)
        out.B[...] = self.B
        out.initialized[...] = self.initialized
        return out

    def update(self, means, present):
        bank_update(self, means, present)


def bank_update(bank: MemoryBank, means, present) -> None:
    means = np.asarray(means, dtype=np.float64)
    present = np.asarray(present, dtype=bool)
    if means.shape != bank.B.shape or present.shape != (bank.B.shape[1],):
        raise ValueError(
            f"bank is {bank.B.shape}, got means {means.shape} / mask {present.shape}")
    m = bank.momentum
    fresh = present & ~bank.initialized
    seen = present & bank.initialized
    bank.B[:, fresh] = means[:, fresh]
    bank.B[:, seen] = m * bank.B[:, seen] + (1.0 - m) * means[:, seen]
    bank.initialized |= present


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def contrastive_loss(f_s, labels, keys, valid=None, tau: float = 0.07):
    """Prototype contrastive loss and its gradient w.r.t. ``f_s``.

    ``keys`` is a ``D x C`` prototype matrix (a :class:`MemoryBank` is
    accepted too) and ``valid`` flags the usable columns. Each query whose
    class column is valid is scored against all valid columns; the loss is
    the mean over those queries. Keys are constants.
    """
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if isinstance(keys, MemoryBank):
        keys, valid = keys.B, keys.initialized if valid is None else valid
    f_s = np.asarray(f_s, dtype=np.float64)
    labels = np.asarray(labels)
    keys = np.asarray(keys, dtype=np.float64)
    C = keys.shape[1]
    valid = np.ones(C, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    grad = np.zeros_like(f_s)

    query = eval_mask(labels, C)
    query[query] = valid[labels[query]]
    n = int(query.sum())
    if n == 0:
        return 0.0, grad

    cols = np.flatnonzero(valid)
    pos = np.searchsorted(cols, labels[query])
    logits = f_s[query] @ keys[:, cols] / tau
    logp = _log_softmax(logits)
    loss = -logp[np.arange(n), pos].sum() / n
    dlogits = np.exp(logp)
    dlogits[np.arange(n), pos] -= 1.0
    grad[query] = dlogits @ keys[:, cols].T / (tau * n)
    return float(loss), grad


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy over evaluation-class points, and its gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    grad = np.zeros_like(logits)
    keep = eval_mask(labels, logits.shape[1])
    n = int(keep.sum())
    if n == 0:
        return 0.0, grad
    logp = _log_softmax(logits[keep])
    rows = np.arange(n)
    loss = -logp[rows, labels[keep]].sum() / n
    d = np.exp(logp)
    d[rows, labels[keep]] -= 1.0
    grad[keep] = d / n
    return float(loss), grad


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    ct: float
    total: float
    lambda_ct: float = 0.1


def total_loss(logits_w, labels, ct: float, lambda_ct: float = 0.1) -> LossBreakdown:
    ce, _ = cross_entropy(logits_w, labels)
    return combine(ce, ct, lambda_ct)


def combine(ce: float, ct: float, lambda_ct: float) -> LossBreakdown:
    return LossBreakdown(ce=float(ce), ct=float(ct), total=float(ce + lambda_ct * ct),
                         lambda_ct=float(lambda_ct))
