"""Numpy kernels for the 1D U-Net.

Every layer is a pair of plain functions: ``*_forward`` returns the output
together with a cache, ``*_backward`` consumes the upstream gradient and the
cache.  Tensors are laid out as ``(batch, channels, length)``.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _check3(x: np.ndarray, name: str = "input") -> None:
    if x.ndim != 3:
        raise ShapeError(f"{name} must be (batch, channels, length), got shape {x.shape}")


# --------------------------------------------------------------------- conv

def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-padded 1D convolution (cross-correlation, zero padding).

    ``out[b, o, l] = bias[o] + sum_{c, j} w[o, c, j] * x[b, c, l + j - (k - 1) // 2]``
    """
    _check3(x)
    n, c, length = x.shape
    o, c_w, k = w.shape
    if c != c_w:
        raise ShapeError(f"conv1d expects {c_w} input channels, got {c}")
    if k % 2 != 1:
        raise ShapeError(f"conv1d kernel size must be odd, got {k}")
    if b.shape != (o,):
        raise ShapeError(f"conv1d bias must have shape ({o},), got {b.shape}")
    pad = (k - 1) // 2
    if k == 1:
        cols = x
    else:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        # (n, c, k, L) -> (n, c*k, L), ordered to match w.reshape(o, c*k)
        cols = np.stack([xp[:, :, j:j + length] for j in range(k)], axis=2)
        cols = cols.reshape(n, c * k, length)
    out = np.matmul(w.reshape(o, c * k), cols)
    out += b[None, :, None]
    return out, (cols, x.shape, w)


def conv1d_backward(dout: np.ndarray, cache):
    cols, x_shape, w = cache
    n, c, length = x_shape
    o, _, k = w.shape
    w2 = w.reshape(o, c * k)
    db = dout.sum(axis=(0, 2))
    # sum over batch of dout[b] @ cols[b].T
    dw = np.tensordot(dout, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
    dcols = np.matmul(w2.T, dout)
    if k == 1:
        return dcols, dw, db
    dcols = dcols.reshape(n, c, k, length)
    pad = (k - 1) // 2
    dxp = np.zeros((n, c, length + 2 * pad), dtype=dout.dtype)
    for j in range(k):
        dxp[:, :, j:j + length] += dcols[:, :, j, :]
    return dxp[:, :, pad:pad + length], dw, db


# --------------------------------------------------------------- batchnorm

def batchnorm_forward(x, gamma, beta, running_mean, running_var, train: bool):
    """Per-channel batch normalization over (batch, length).

    In train mode ``running_mean``/``running_var`` are updated in place with
    momentum ``BN_MOMENTUM`` (the running variance uses the unbiased batch
    variance).  In infer mode the running statistics are used.
    """
    _check3(x)
    if train:
        n, _, length = x.shape
        count = n * length
        if n < 2:
            raise ShapeError("batch norm in train mode needs a batch of at least 2")
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        running_mean *= BN_MOMENTUM
        running_mean += (1.0 - BN_MOMENTUM) * mean
        running_var *= BN_MOMENTUM
        running_var += (1.0 - BN_MOMENTUM) * var * (count / (count - 1))
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
    out = gamma[None, :, None] * xhat + beta[None, :, None]
    return out, (xhat, inv_std, gamma, train)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, train = cache
    dgamma = (dout * xhat).sum(axis=(0, 2))
    dbeta = dout.sum(axis=(0, 2))
    dxhat = dout * gamma[None, :, None]
    if not train:
        return dxhat * inv_std[None, :, None], dgamma, dbeta
    m = xhat.shape[0] * xhat.shape[2]
    sum_dxhat = dxhat.sum(axis=(0, 2))[None, :, None]
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
    dx = (inv_std[None, :, None] / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return dx, dgamma, dbeta


# ------------------------------------------------------------- activations

def relu_forward(x):
    out = np.maximum(x, 0)
    return out, out > 0


def relu_with_mask(x, mask):
    """ReLU whose active set is given instead of computed (for gradient checks)."""
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def sigmoid(x):
    """Logistic function evaluated branch-wise so neither tail overflows."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_forward(x):
    out = sigmoid(x)
    return out, out


def sigmoid_backward(dout, out):
    return dout * out * (1.0 - out)


# ------------------------------------------------------------ resampling

def maxpool1d_forward(x, pool: int = 2):
    """Non-overlapping max pooling; ties resolve to the earlier index."""
    _check3(x)
    n, c, length = x.shape
    if length % pool:
        raise ShapeError(f"maxpool1d needs a length divisible by {pool}, got {length}")
    xr = x.reshape(n, c, length // pool, pool)
    arg = xr.argmax(axis=3)
    out = np.take_along_axis(xr, arg[..., None], axis=3)[..., 0]
    return out, (arg, x.shape, pool)


def maxpool1d_select(x, arg, pool: int = 2):
    """Pooling that reads the positions in ``arg`` instead of taking the max."""
    n, c, length = x.shape
    xr = x.reshape(n, c, length // pool, pool)
    out = np.take_along_axis(xr, arg[..., None], axis=3)[..., 0]
    return out, (arg, x.shape, pool)


def maxpool1d_backward(dout, cache):
    arg, x_shape, pool = cache
    n, c, length = x_shape
    dx = np.zeros((n, c, length // pool, pool), dtype=dout.dtype)
    np.put_along_axis(dx, arg[..., None], dout[..., None], axis=3)
    return dx.reshape(x_shape)


def maxpool_indices(arg: np.ndarray, pool: int = 2) -> np.ndarray:
    """Absolute input positions selected by a pooling argmax array."""
    return arg + pool * np.arange(arg.shape[-1])


def upsample1d_forward(x, factor: int = 2):
    """Nearest-neighbour upsampling: every sample is repeated ``factor`` times."""
    _check3(x)
    return np.repeat(x, factor, axis=2), factor


def upsample1d_backward(dout, factor):
    n, c, length = dout.shape
    return dout.reshape(n, c, length // factor, factor).sum(axis=3)
