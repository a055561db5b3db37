from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import NumericError, ShapeError
from .core import Param


def adam_update(
    params: Sequence[Param],
    grads: Sequence[np.ndarray] | None = None,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam step, in place. Uses ``p.grad`` unless ``grads`` is given."""
    if grads is None:
        grads = [p.grad for p in params]
    if len(grads) != len(params):
        raise ShapeError("one gradient per parameter required")
    for p, g in zip(params, grads):
        if g.shape != p.value.shape:
            raise ShapeError(f"{p.name}: gradient shape {g.shape} != {p.value.shape}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {p.name}")
    for p, g in zip(params, grads):
        p.step += 1
        p.m *= beta1
        p.m += (1 - beta1) * g
        p.v *= beta2
        p.v += (1 - beta2) * g * g
        m_hat = p.m / (1 - beta1**p.step)
        v_hat = p.v / (1 - beta2**p.step)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
