"""Neural-network building blocks with hand-written backward rules."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, absolute, as_tensor, mean, tsum

LAYER_NORM_EPS = 1e-10


def softmax(x, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``."""
    x = as_tensor(x)
    if x.shape[axis] == 0:
        raise ShapeError("softmax over an empty axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return Tensor._result(y, (x,), bw, "softmax")


def layer_norm(x, gain, bias, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift.

    ``eps`` floors the variance so constant rows map to zero instead of NaN.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    n = x.shape[-1]
    if n < 2:
        raise ShapeError("layer_norm needs a feature axis of length >= 2")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        dgain = np.sum(g * xhat, axis=lead).reshape(gain.shape)
        dbias = np.sum(g, axis=lead).reshape(bias.shape)
        return dx, dgain, dbias

    return Tensor._result(out, (x, gain, bias), bw, "layer_norm")


def mse_loss(pred, target, reduction: str = "mean") -> Tensor:
    diff = as_tensor(pred) - as_tensor(target)
    sq = diff * diff
    return mean(sq) if reduction == "mean" else tsum(sq)


def l1_loss(pred, target, reduction: str = "mean") -> Tensor:
    a = absolute(as_tensor(pred) - as_tensor(target))
    return mean(a) if reduction == "mean" else tsum(a)


def squared_norm(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    return tsum(x * x, axis=axis)
