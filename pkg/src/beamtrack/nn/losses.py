from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, label):
    """Loss and gradient w.r.t. the logits.

    For a 1-D ``logits`` and integer ``label`` returns the per-sample loss;
    for (B, M) logits and (B,) labels returns the batch mean and the
    gradient of that mean.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1:
        M = logits.shape[0]
        if not (0 <= int(label) < M):
            raise DomainError(f"label {label} outside [0, {M})")
        z = logits - logits.max()
        log_sum = np.log(np.exp(z).sum())
        loss = float(log_sum - z[label])
        grad = np.exp(z - log_sum)
        grad[label] -= 1.0
        return loss, grad
    if logits.ndim != 2:
        raise ShapeError(f"logits must be 1-D or 2-D, got {logits.shape}")
    labels = np.asarray(label, dtype=np.int64)
    B, M = logits.shape
    if labels.shape != (B,):
        raise ShapeError(f"expected {B} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= M:
        raise DomainError(f"labels outside [0, {M})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_sum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(B)
    loss = float(np.mean(log_sum - z[rows, labels]))
    grad = np.exp(z - log_sum[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / B
