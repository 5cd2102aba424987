"""Differentiable operations with input generators, shared by the unit and acceptance suites.

Inputs for kinked functions (relu, abs, l1) are kept at least 0.1 away from
the kink so that central differences see a smooth function.
"""
import numpy as np

from soundloc.autodiff import (
    absolute, add, broadcast_to, concat, div, exp, gelu, getitem, l1_loss, layer_norm, log, matmul,
    mean, mse_loss, mul, power, relu, reshape, softmax, sqrt, squared_norm, stack, sub, swapaxes,
    tanh, transpose, tsum, where,
)


def _away(r, shape):
    x = r.standard_normal(shape)
    return np.where(np.abs(x) < 0.1, np.sign(x + 1e-12) * 0.1 + x, x)


def _pos(r, shape):
    return r.uniform(0.5, 2.0, shape)


MASK = np.array([[True, False, True], [False, False, True]])

OPS = {
    "add_broadcast": (lambda a, b: add(a, b), lambda r: [r.standard_normal((2, 3)), r.standard_normal(3)]),
    "sub": (lambda a, b: sub(a, b), lambda r: [r.standard_normal((2, 3)), r.standard_normal((2, 1))]),
    "mul_broadcast": (lambda a, b: mul(a, b), lambda r: [r.standard_normal((4, 1, 3)), r.standard_normal((2, 3))]),
    "div": (lambda a, b: div(a, b), lambda r: [r.standard_normal((2, 3)), _pos(r, (2, 3))]),
    "power": (lambda a: power(a, 3.0), lambda r: [r.standard_normal((3, 2))]),
    "power_frac": (lambda a: power(a, 1.5), lambda r: [_pos(r, (5,))]),
    "matmul": (lambda a, b: matmul(a, b), lambda r: [r.standard_normal((3, 4)), r.standard_normal((4, 2))]),
    "matmul_batched": (lambda a, b: matmul(a, b), lambda r: [r.standard_normal((2, 3, 4)), r.standard_normal((4, 5))]),
    "sum_axis": (lambda a: tsum(a, axis=1, keepdims=True), lambda r: [r.standard_normal((3, 4))]),
    "mean": (lambda a: mean(a, axis=0), lambda r: [r.standard_normal((3, 4))]),
    "reshape": (lambda a: reshape(a, (6, 2)), lambda r: [r.standard_normal((3, 4))]),
    "transpose": (lambda a: transpose(a, (2, 0, 1)), lambda r: [r.standard_normal((2, 3, 4))]),
    "swapaxes": (lambda a: swapaxes(a, 0, 2), lambda r: [r.standard_normal((2, 3, 4))]),
    "slice": (lambda a: getitem(a, (slice(1, 3), slice(None, None, 2))), lambda r: [r.standard_normal((4, 5))]),
    "gather": (lambda a: getitem(a, np.array([0, 2, 2, 1])), lambda r: [r.standard_normal((3, 2))]),
    "concat": (lambda a, b: concat([a, b], axis=1), lambda r: [r.standard_normal((2, 3)), r.standard_normal((2, 2))]),
    "stack": (lambda a, b: stack([a, b], axis=0), lambda r: [r.standard_normal((2, 3)), r.standard_normal((2, 3))]),
    "broadcast_to": (lambda a: broadcast_to(a, (4, 2, 3)), lambda r: [r.standard_normal((2, 1))]),
    "where": (lambda a, b: where(MASK, a, b), lambda r: [r.standard_normal((2, 3)), r.standard_normal((2, 3))]),
    "exp": (lambda a: exp(a), lambda r: [r.standard_normal((2, 3))]),
    "log": (lambda a: log(a), lambda r: [_pos(r, (2, 3))]),
    "sqrt": (lambda a: sqrt(a), lambda r: [_pos(r, (2, 3))]),
    "tanh": (lambda a: tanh(a), lambda r: [r.standard_normal((2, 3))]),
    "relu": (lambda a: relu(a), lambda r: [_away(r, (3, 3))]),
    "gelu": (lambda a: gelu(a), lambda r: [2 * r.standard_normal((3, 3))]),
    "abs": (lambda a: absolute(a), lambda r: [_away(r, (3, 3))]),
    "softmax": (lambda a: softmax(a, axis=-1), lambda r: [r.standard_normal((3, 5))]),
    "softmax_axis0": (lambda a: softmax(a, axis=0), lambda r: [3 * r.standard_normal((4, 2))]),
    "layer_norm": (lambda x, g, b: layer_norm(x, g, b), lambda r: [r.standard_normal((3, 6)), r.standard_normal(6), r.standard_normal(6)]),
    "mse_loss": (lambda a, b: mse_loss(a, b), lambda r: [r.standard_normal((3, 2)), r.standard_normal((3, 2))]),
    "l1_loss": (lambda a: l1_loss(a, np.zeros((3, 2))), lambda r: [_away(r, (3, 2))]),
    "squared_norm": (lambda a: squared_norm(a), lambda r: [r.standard_normal((4, 3))]),
}
