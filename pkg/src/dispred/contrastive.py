"""Supervised contrastive loss over a replicated ("multi-viewed") batch.

Rows are L2-normalised before taking dot products and the temperature sits
inside the exponent. The loss is a sum over anchors (not a mean), which is
why the latent-loss weights used in training are small (~1e-4).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBatchError, DimensionError, ParameterError

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class MultiViewBatch:
    Z: np.ndarray
    labels: np.ndarray

    @property
    def n_views(self) -> int:
        return self.Z.shape[0]

    def view_index(self, i: int) -> int:
        """Index of the replicated partner of anchor ``i`` (0-based)."""
        half = self.n_views // 2
        return (i + half) % self.n_views

    def positives(self, i: int) -> np.ndarray:
        same = self.labels == self.labels[i]
        same[i] = False
        return np.flatnonzero(same)


def duplicate_batch(Z_half, labels) -> MultiViewBatch:
    Z_half = np.asarray(Z_half, dtype=np.float64)
    labels = np.asarray(labels)
    if Z_half.ndim != 2 or labels.shape != (Z_half.shape[0],):
        raise DimensionError(f"latents {Z_half.shape} and labels {labels.shape} are not aligned")
    if Z_half.shape[0] < 2:
        raise DegenerateBatchError(f"batch needs at least 2 rows, got {Z_half.shape[0]}")
    return MultiViewBatch(np.vstack([Z_half, Z_half]), np.concatenate([labels, labels]))


def anchor_log_probs(Z, tau: float):
    """Row-wise log-softmax of normalised similarities over ``r != i``.

    Returns ``(log_prob, U, norms)``; the diagonal of ``log_prob`` is -inf.
    """
    if not tau > 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    Z = np.asarray(Z, dtype=np.float64)
    norms = np.maximum(np.sqrt(np.sum(Z * Z, axis=1)), _NORM_EPS)
    U = Z / norms[:, None]
    logits = (U @ U.T) / tau
    np.fill_diagonal(logits, -np.inf)
    row_max = logits.max(axis=1, keepdims=True)
    shifted = logits - row_max
    log_prob = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return log_prob, U, norms


def sc_loss(batch: MultiViewBatch, tau: float) -> tuple[float, np.ndarray]:
    """Return ``(loss, dloss/dZ)`` for the supervised contrastive loss."""
    labels = np.asarray(batch.labels)
    n = batch.Z.shape[0]
    if labels.shape != (n,):
        raise DimensionError(f"{labels.shape[0]} labels for {n} rows")
    log_prob, U, norms = anchor_log_probs(batch.Z, tau)

    pos = labels[:, None] == labels[None, :]
    np.fill_diagonal(pos, False)
    n_pos = pos.sum(axis=1)
    active = n_pos > 0
    if not active.any():
        raise DegenerateBatchError("no anchor has a positive in the batch")

    w = np.where(active, 1.0 / np.maximum(n_pos, 1), 0.0)
    loss = -float(np.sum(w * np.sum(np.where(pos, log_prob, 0.0), axis=1)))

    # d loss / d logits: softmax minus positive weights, only for active anchors
    softmax = np.exp(log_prob)
    A = active[:, None] * softmax - w[:, None] * pos
    G_u = (A + A.T) @ U / tau
    radial = np.sum(G_u * U, axis=1, keepdims=True)
    grad = (G_u - radial * U) / norms[:, None]
    return loss, grad
