"""Central finite-difference checks for the numpy kernels and the full network."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .losses import bce_loss
from .unet import UNetModel

# Entries whose analytic and numeric gradients are both below this are treated
# as exact zeros (e.g. a conv bias feeding batch norm).
ZERO_FLOOR = 1e-7


def relative_error(analytic, numeric, floor: float = ZERO_FLOOR) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|)``, ignoring shared near-zeros."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = np.maximum(np.abs(a), np.abs(n))
    keep = scale > floor
    if not keep.any():
        return float(np.max(np.abs(a - n), initial=0.0))
    return float(np.max(np.abs(a - n)[keep] / scale[keep]))


def numeric_gradient(f: Callable[[], float], x: np.ndarray, h: float = 1e-4,
                     indices=None) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. ``x`` (perturbed in place).

    With ``indices`` only those flat positions are probed; the result then has
    one entry per index.
    """
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = []
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out.append((fp - fm) / (2 * h))
    grad = np.array(out, dtype=np.float64)
    return grad.reshape(x.shape) if indices is None else grad


def check_layer(forward: Callable, backward: Callable, inputs: list[np.ndarray],
                rng: np.random.Generator, h: float = 1e-4) -> list[float]:
    """Compare a layer's backward pass to finite differences of ``sum(out * g)``.

    ``forward(*inputs)`` returns ``(out, cache)``; ``backward(g, cache)`` returns
    the gradient for each input (a single array or a tuple).  Returns one
    relative error per input.
    """
    out, cache = forward(*inputs)
    g = rng.standard_normal(out.shape)
    grads = backward(g, cache)
    if not isinstance(grads, tuple):
        grads = (grads,)

    def scalar():
        return float(np.sum(forward(*inputs)[0] * g))

    return [relative_error(ga, numeric_gradient(scalar, x, h)) for ga, x in zip(grads, inputs)]


def check_unet(model: UNetModel, x: np.ndarray, y: np.ndarray, n_params: int = 50,
               rng: np.random.Generator | None = None, h: float = 1e-4,
               freeze_pattern: bool = True) -> float:
    """Finite-difference check of BCE-loss gradients on ``n_params`` sampled weights.

    The model should be float64.  Each sample picks a parameter tensor, then
    one entry inside it, so small tensors are probed as often as large ones.

    A step of ``h`` on one weight moves thousands of ReLU inputs and pooling
    pairs, and some of them cross their switching point, so the plain
    difference quotient mixes neighbouring linear pieces.  With
    ``freeze_pattern`` the perturbed passes keep the active sets of the base
    pass, which differentiates the piece the gradient belongs to.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.asarray(x, dtype=np.float64)
    probs, caches = model.forward(x, train=True, return_cache=True)
    _, dprobs = bce_loss(probs, y)
    grads = model.backward(dprobs, caches)

    pattern = caches if freeze_pattern else None

    def loss():
        return bce_loss(model.forward(x, train=True, pattern=pattern), y)[0]

    names = list(model.params)
    picks = rng.choice(len(names), size=n_params, replace=n_params > len(names))
    worst = 0.0
    for name in (names[k] for k in picks):
        p = model.params[name]
        i = int(rng.integers(p.size))
        num = numeric_gradient(loss, p, h, indices=[i])
        worst = max(worst, relative_error(grads[name].reshape(-1)[i:i + 1], num))
    return worst
