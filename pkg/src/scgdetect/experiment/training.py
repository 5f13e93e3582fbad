"""Mini-batch training with early stopping, and fine-tuning."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, ShapeError, TrainingError
from ..neural import AdamState, UNetConfig, UNetModel, adam_step, bce_loss
from .data import WindowBatch

log = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    batch_size: int = 32
    lr: float = 1e-4
    max_epochs: int = 200
    patience: int = 10
    train_stride_seconds: float | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (batch norm)")
        if self.max_epochs < 0 or self.patience < 1 or self.lr < 0:
            raise ValueError("max_epochs >= 0, patience >= 1 and lr >= 0 are required")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False

    def rows(self):
        for i, (a, b) in enumerate(zip(self.train_loss, self.val_loss)):
            yield i, a, b


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    out = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    # batch norm cannot train on a single window: fold it into the previous batch
    if len(out) > 1 and len(out[-1]) == 1:
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def evaluate_loss(model: UNetModel, batch: WindowBatch, chunk: int = 64) -> float:
    total, n = 0.0, 0
    for i in range(0, len(batch), chunk):
        p = model.forward(batch.x[i:i + chunk], train=False)
        loss, _ = bce_loss(p, batch.y[i:i + chunk].astype(p.dtype))
        total += loss * p.size
        n += p.size
    return total / n


def train_model(train: WindowBatch, val: WindowBatch, cfg: TrainingConfig | None = None,
                model: UNetModel | None = None, unet: UNetConfig | None = None,
                seed: int = 0) -> tuple[UNetModel, TrainHistory]:
    """Train until ``patience`` epochs pass without a lower validation loss.

    The weights of the best validation epoch are restored on return.  A
    fresh model is initialized from ``unet`` (or a default config matching
    the data) unless ``model`` is given, in which case a copy is trained.
    """
    cfg = cfg or TrainingConfig()
    rng = np.random.default_rng(seed)
    if model is None:
        unet = unet or UNetConfig(in_channels=train.n_channels, input_length=train.x.shape[-1])
        model = UNetModel.initialize(unet, rng=rng)
    else:
        model = model.copy()
    if train.n_channels != model.config.in_channels:
        raise ShapeError(f"model expects {model.config.in_channels} channels, "
                         f"training data has {train.n_channels}")
    history = TrainHistory()
    if cfg.max_epochs == 0:
        return model, history
    if len(train) < 2 or len(val) == 0:
        raise DataError(f"need >= 2 training and >= 1 validation windows, "
                        f"got {len(train)} and {len(val)}")
    if val.n_channels != model.config.in_channels:
        raise ShapeError("validation data channel count does not match the model")
    state = AdamState(lr=cfg.lr)
    best_val, best_arrays, since_best = np.inf, None, 0
    step = 0
    for epoch in range(cfg.max_epochs):
        losses = []
        for idx in _batches(len(train), cfg.batch_size, rng):
            xb = train.x[idx]
            yb = train.y[idx].astype(model.dtype)
            probs, cache = model.forward(xb, train=True, return_cache=True)
            loss, dprobs = bce_loss(probs, yb)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {step}")
            grads = model.backward(dprobs, cache)
            adam_step(model.params, grads, state, batch_index=step)
            losses.append(loss * len(idx))
            step += 1
        train_loss = float(np.sum(losses) / len(train))
        val_loss = evaluate_loss(model, val)
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        log.debug("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
        if val_loss < best_val:
            best_val, since_best = val_loss, 0
            history.best_epoch = epoch
            best_arrays = {k: v.copy() for k, v in model.state_arrays().items()}
        else:
            since_best += 1
            if since_best >= cfg.patience:
                history.stopped_early = True
                break
    for k, v in best_arrays.items():
        target = model.params if k in model.params else model.buffers
        target[k] = v
    return model, history


def fine_tune(model: UNetModel, train: WindowBatch, val: WindowBatch,
              cfg: TrainingConfig | None = None, seed: int = 0) -> tuple[UNetModel, TrainHistory]:
    """Continue training a copy of ``model`` with a fresh Adam state."""
    if train.n_channels != model.config.in_channels:
        raise ShapeError(f"model expects {model.config.in_channels} channels, "
                         f"fine-tuning data has {train.n_channels}")
    return train_model(train, val, cfg, model=model, seed=seed)
