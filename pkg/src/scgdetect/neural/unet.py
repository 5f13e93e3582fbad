"""1D U-Net for per-sample systolic-complex segmentation.

Layout for ``depth`` levels with ``f_i = base_filters * 2**i``::

    enc_i : [conv k -> BN -> ReLU] x 2 (-> f_i), cache skip, maxpool 2
    bottleneck : [conv k -> BN -> ReLU] x 2 (-> 2 * f_{depth-1})
    dec_i : upsample 2, conv k -> BN -> ReLU (-> f_i), concat skip_i (2 f_i),
            [conv k -> BN -> ReLU] x 2 (-> f_i)
    head : conv 1 (-> 1), sigmoid

Decoders run from the deepest level up, so decoder level ``d`` (counted from
the bottom) joins encoder level ``depth - 1 - d``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeError
from . import layers as L


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 1
    depth: int = 4
    base_filters: int = 16
    kernel_size: int = 3
    input_length: int = 320

    def __post_init__(self):
        if self.in_channels < 1:
            raise ShapeError(f"in_channels must be positive, got {self.in_channels}")
        if self.depth < 1 or self.base_filters < 1:
            raise ShapeError("depth and base_filters must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ShapeError(f"kernel_size must be a positive odd integer, got {self.kernel_size}")
        if self.input_length % (2 ** self.depth):
            raise ShapeError(
                f"input_length {self.input_length} is not divisible by 2**depth = {2 ** self.depth}"
            )

    def filters(self, level: int) -> int:
        return self.base_filters * 2 ** level

    def to_dict(self) -> dict:
        return asdict(self)


def _unit_names(config: UNetConfig) -> list[tuple[str, int, int, int]]:
    """Ordered (name, in_ch, out_ch, kernel) for every conv+BN+ReLU unit."""
    k = config.kernel_size
    units = []
    ch = config.in_channels
    for i in range(config.depth):
        f = config.filters(i)
        units.append((f"enc{i}.0", ch, f, k))
        units.append((f"enc{i}.1", f, f, k))
        ch = f
    fb = 2 * config.filters(config.depth - 1)
    units.append(("bottleneck.0", ch, fb, k))
    units.append(("bottleneck.1", fb, fb, k))
    ch = fb
    for i in reversed(range(config.depth)):
        f = config.filters(i)
        units.append((f"dec{i}.up", ch, f, k))
        units.append((f"dec{i}.0", 2 * f, f, k))
        units.append((f"dec{i}.1", f, f, k))
        ch = f
    return units


class UNetModel:
    """Parameters, batch-norm buffers and the forward/backward passes.

    ``params`` maps names to trainable arrays; ``buffers`` holds batch-norm
    running statistics.  Both dicts preserve a fixed insertion order, which
    is also the serialization order used by checkpoints.
    """

    def __init__(self, config: UNetConfig, params: dict, buffers: dict, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params = {k: np.asarray(v, dtype=self.dtype) for k, v in params.items()}
        self.buffers = {k: np.asarray(v, dtype=self.dtype) for k, v in buffers.items()}
        self.train_mode = False
        self._units = _unit_names(config)
        expected = self.expected_shapes()
        for name, shape in expected.items():
            if name not in self.params and name not in self.buffers:
                raise ShapeError(f"missing parameter {name}")
            arr = self.params.get(name, self.buffers.get(name))
            if arr.shape != shape:
                raise ShapeError(f"parameter {name} has shape {arr.shape}, expected {shape}")

    # ---------------------------------------------------------------- setup
    def expected_shapes(self) -> dict[str, tuple]:
        shapes = {}
        for name, cin, cout, k in self._units:
            shapes[f"{name}.conv.w"] = (cout, cin, k)
            shapes[f"{name}.conv.b"] = (cout,)
            shapes[f"{name}.bn.gamma"] = (cout,)
            shapes[f"{name}.bn.beta"] = (cout,)
            shapes[f"{name}.bn.mean"] = (cout,)
            shapes[f"{name}.bn.var"] = (cout,)
        shapes["head.conv.w"] = (1, self.config.base_filters, 1)
        shapes["head.conv.b"] = (1,)
        return shapes

    @classmethod
    def initialize(cls, config: UNetConfig, rng: np.random.Generator | int | None = 0,
                   dtype=np.float32) -> "UNetModel":
        """He-uniform conv weights, zero biases, unit/zero batch-norm affine."""
        rng = np.random.default_rng(rng)
        params, buffers = {}, {}
        for name, cin, cout, k in _unit_names(config):
            limit = np.sqrt(6.0 / (cin * k))
            params[f"{name}.conv.w"] = rng.uniform(-limit, limit, size=(cout, cin, k))
            params[f"{name}.conv.b"] = np.zeros(cout)
            params[f"{name}.bn.gamma"] = np.ones(cout)
            params[f"{name}.bn.beta"] = np.zeros(cout)
            buffers[f"{name}.bn.mean"] = np.zeros(cout)
            buffers[f"{name}.bn.var"] = np.ones(cout)
        limit = np.sqrt(6.0 / config.base_filters)
        params["head.conv.w"] = rng.uniform(-limit, limit, size=(1, config.base_filters, 1))
        params["head.conv.b"] = np.zeros(1)
        return cls(config, params, buffers, dtype=dtype)

    def copy(self) -> "UNetModel":
        clone = UNetModel(self.config, {k: v.copy() for k, v in self.params.items()},
                          {k: v.copy() for k, v in self.buffers.items()}, dtype=self.dtype)
        clone.train_mode = self.train_mode
        return clone

    def astype(self, dtype) -> "UNetModel":
        return UNetModel(self.config, self.params, self.buffers, dtype=dtype)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Parameters followed by buffers, in serialization order."""
        out = dict(self.params)
        out.update(self.buffers)
        return out

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    # -------------------------------------------------------------- passes
    def _unit_forward(self, name, x, train, pattern=None):
        p, bf = self.params, self.buffers
        z, c_conv = L.conv1d_forward(x, p[f"{name}.conv.w"], p[f"{name}.conv.b"])
        y, c_bn = L.batchnorm_forward(z, p[f"{name}.bn.gamma"], p[f"{name}.bn.beta"],
                                      bf[f"{name}.bn.mean"], bf[f"{name}.bn.var"], train)
        if pattern is None:
            a, c_relu = L.relu_forward(y)
        else:
            a, c_relu = L.relu_with_mask(y, pattern[name][2])
        return a, (c_conv, c_bn, c_relu)

    def _unit_backward(self, name, da, cache, grads):
        c_conv, c_bn, c_relu = cache
        dy = L.relu_backward(da, c_relu)
        dz, grads[f"{name}.bn.gamma"], grads[f"{name}.bn.beta"] = L.batchnorm_backward(dy, c_bn)
        dx, grads[f"{name}.conv.w"], grads[f"{name}.conv.b"] = L.conv1d_backward(dz, c_conv)
        return dx

    def forward(self, x: np.ndarray, train: bool | None = None, return_cache: bool = False,
                pattern: dict | None = None):
        """Map a ``(B, C, L)`` batch to per-sample probabilities ``(B, 1, L)``.

        ``pattern`` takes the caches of an earlier pass and reuses its ReLU
        active sets and pooling choices, which makes the network linear in
        each weight around that pass (used for finite-difference checks).
        """
        train = self.train_mode if train is None else train
        x = np.asarray(x, dtype=self.dtype)
        L._check3(x)
        cfg = self.config
        if x.shape[1] != cfg.in_channels:
            raise ShapeError(f"model expects {cfg.in_channels} channels, got {x.shape[1]}")
        if x.shape[2] % (2 ** cfg.depth):
            raise ShapeError(f"input length {x.shape[2]} is not divisible by {2 ** cfg.depth}")
        if not np.isfinite(x).all():
            raise ShapeError("input contains NaN or Inf")
        caches = {}
        skips = []
        h = x
        for i in range(cfg.depth):
            h, caches[f"enc{i}.0"] = self._unit_forward(f"enc{i}.0", h, train, pattern)
            h, caches[f"enc{i}.1"] = self._unit_forward(f"enc{i}.1", h, train, pattern)
            skips.append(h)
            if pattern is None:
                h, caches[f"pool{i}"] = L.maxpool1d_forward(h)
            else:
                h, caches[f"pool{i}"] = L.maxpool1d_select(h, pattern[f"pool{i}"][0])
        h, caches["bottleneck.0"] = self._unit_forward("bottleneck.0", h, train, pattern)
        h, caches["bottleneck.1"] = self._unit_forward("bottleneck.1", h, train, pattern)
        for i in reversed(range(cfg.depth)):
            h, caches[f"upsample{i}"] = L.upsample1d_forward(h)
            h, caches[f"dec{i}.up"] = self._unit_forward(f"dec{i}.up", h, train, pattern)
            h = np.concatenate([h, skips[i]], axis=1)
            h, caches[f"dec{i}.0"] = self._unit_forward(f"dec{i}.0", h, train, pattern)
            h, caches[f"dec{i}.1"] = self._unit_forward(f"dec{i}.1", h, train, pattern)
        logits, caches["head"] = L.conv1d_forward(h, self.params["head.conv.w"],
                                                 self.params["head.conv.b"])
        probs, caches["sigmoid"] = L.sigmoid_forward(logits)
        if return_cache:
            return probs, caches
        return probs

    def backward(self, dprobs: np.ndarray, caches: dict) -> dict[str, np.ndarray]:
        """Gradients of the loss w.r.t. every parameter given ``dL/dprobs``."""
        cfg = self.config
        grads: dict[str, np.ndarray] = {}
        dlogits = L.sigmoid_backward(dprobs, caches["sigmoid"])
        dh, grads["head.conv.w"], grads["head.conv.b"] = L.conv1d_backward(dlogits, caches["head"])
        dskips = [None] * cfg.depth
        for i in range(cfg.depth):
            f = cfg.filters(i)
            dh = self._unit_backward(f"dec{i}.1", dh, caches[f"dec{i}.1"], grads)
            dh = self._unit_backward(f"dec{i}.0", dh, caches[f"dec{i}.0"], grads)
            dh, dskips[i] = dh[:, :f], dh[:, f:]
            dh = self._unit_backward(f"dec{i}.up", dh, caches[f"dec{i}.up"], grads)
            dh = L.upsample1d_backward(dh, caches[f"upsample{i}"])
        dh = self._unit_backward("bottleneck.1", dh, caches["bottleneck.1"], grads)
        dh = self._unit_backward("bottleneck.0", dh, caches["bottleneck.0"], grads)
        for i in reversed(range(cfg.depth)):
            dh = L.maxpool1d_backward(dh, caches[f"pool{i}"])
            dh = dh + dskips[i]
            dh = self._unit_backward(f"enc{i}.1", dh, caches[f"enc{i}.1"], grads)
            dh = self._unit_backward(f"enc{i}.0", dh, caches[f"enc{i}.0"], grads)
        return {name: grads[name] for name in self.params}

    def predict(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Inference-mode probabilities, evaluated in fixed-size chunks."""
        x = np.asarray(x)
        if len(x) == 0:
            return np.zeros((0, 1, x.shape[-1]), dtype=self.dtype)
        out = [self.forward(x[i:i + batch_size], train=False) for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)
