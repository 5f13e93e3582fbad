"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def ensure(self, params: dict) -> None:
        for name, p in params.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)


def adam_step(params: dict, grads: dict, state: AdamState, batch_index: int | None = None) -> None:
    """Apply one Adam update to ``params`` in place and advance ``state``."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            where = "" if batch_index is None else f" at batch {batch_index}"
            raise TrainingError(f"non-finite gradient for {name}{where}")
        if g.shape != params[name].shape:
            raise TrainingError(f"gradient for {name} has shape {g.shape}, "
                                f"parameter has {params[name].shape}")
    state.ensure(params)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    # fold both bias corrections into the step size
    step = state.lr * np.sqrt(1.0 - b2 ** state.t) / (1.0 - b1 ** state.t)
    eps_hat = state.eps * np.sqrt(1.0 - b2 ** state.t)
    for name, g in grads.items():
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        params[name] -= (step * m / (np.sqrt(v) + eps_hat)).astype(params[name].dtype, copy=False)
