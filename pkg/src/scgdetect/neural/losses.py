"""Binary cross-entropy on per-sample probabilities."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError

PROB_CLAMP = 1e-7


def bce_loss(probs: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient with respect to ``probs``.

    Probabilities are clamped to ``[PROB_CLAMP, 1 - PROB_CLAMP]`` before the
    logarithms; the gradient is evaluated at the clamped values.
    """
    probs = np.asarray(probs)
    target = np.asarray(target)
    if probs.shape != target.shape:
        raise ShapeError(f"probs {probs.shape} and target {target.shape} differ in shape")
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = target.astype(p.dtype, copy=False)
    n = p.size
    loss = -np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)) / n
    grad = ((1.0 - y) / (1.0 - p) - y / p) / n
    return float(loss), grad.astype(probs.dtype, copy=False)
