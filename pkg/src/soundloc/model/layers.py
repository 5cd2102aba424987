"""Parameter containers and standard layers on top of the autodiff engine."""
from __future__ import annotations

import logging

import numpy as np

from ..autodiff import Tensor, concat, gelu, layer_norm, matmul, softmax, transpose, tsum
from ..errors import ShapeError

log = logging.getLogger(__name__)


class Module:
    """Anything holding trainable tensors as attributes (directly, in sub-modules or lists)."""

    def named_parameters(self, prefix: str = "") -> dict:
        out = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{key}.{i}."))
        return out

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.grad = None

    def state_dict(self) -> dict:
        return {k: p.data.copy() for k, p in self.named_parameters().items()}

    def load_state_dict(self, arrays: dict) -> None:
        params = self.named_parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, p in params.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != p.shape:
                raise ShapeError(f"{k}: checkpoint shape {a.shape} != {p.shape}")
            p.data = a.copy()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())


def _init(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    return Tensor(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = _init(rng, d_in, (d_in, d_out))
        self.bias = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x):
        y = matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class MLP(Module):
    """Linear layers with GELU between them (none after the last)."""

    def __init__(self, sizes, rng: np.random.Generator):
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = gelu(x)
        return x


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-6):
        self.gain = Tensor(np.ones(d), requires_grad=True)
        self.bias = Tensor(np.zeros(d), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias, self.eps)


def top_t_mask(weights: np.ndarray, top_t: int) -> np.ndarray:
    """Boolean mask keeping the ``top_t`` largest entries of each row (ties -> lower index)."""
    order = np.argsort(-weights, axis=-1, kind="stable")[..., :top_t]
    mask = np.zeros(weights.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=-1)
    return mask


def attend(q, k, v, top_t: int | None = None):
    """Scaled dot-product attention over the last two axes.

    With ``top_t`` set, only the ``top_t`` largest post-softmax weights of each
    query row are kept and renormalized to sum to one.
    """
    d_k = q.shape[-1]
    scores = matmul(q, transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))) * (1.0 / np.sqrt(d_k))
    weights = softmax(scores, axis=-1)
    n_keys = k.shape[-2]
    if top_t is not None and top_t < n_keys:
        keep = top_t_mask(weights.data, top_t)
        kept = weights * keep
        weights = kept / tsum(kept, axis=-1, keepdims=True)
    return matmul(weights, v), weights


class MultiHeadAttention(Module):
    """Cross-attention: queries from one token set, keys and values from another."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, top_t: int | None = None):
        if d % heads:
            raise ShapeError(f"embed_dim {d} is not divisible by {heads} heads")
        self.heads = heads
        self.top_t = top_t
        self.w_q = Linear(d, d, rng, bias=False)
        self.w_k = Linear(d, d, rng, bias=False)
        self.w_v = Linear(d, d, rng, bias=False)
        self.w_o = Linear(d, d, rng)

    def _split(self, x):
        b, t, d = x.shape
        return transpose(x.reshape(b, t, self.heads, d // self.heads), (0, 2, 1, 3))

    def __call__(self, queries_from, keys_values_from, top_t: int | None = None):
        if queries_from.ndim != 3 or keys_values_from.ndim != 3:
            raise ShapeError("attention inputs must be (batch, tokens, embed_dim)")
        if queries_from.shape[-1] != keys_values_from.shape[-1]:
            raise ShapeError("query and key/value embeddings must have equal width")
        top_t = self.top_t if top_t is None else top_t
        n_keys = keys_values_from.shape[1]
        if top_t is not None and top_t > n_keys:
            log.info("top_t=%d exceeds %d keys; clamping", top_t, n_keys)
            top_t = n_keys
        q = self._split(self.w_q(queries_from))
        k = self._split(self.w_k(keys_values_from))
        v = self._split(self.w_v(keys_values_from))
        out, _ = attend(q, k, v, top_t)
        b, h, t, dk = out.shape
        merged = transpose(out, (0, 2, 1, 3)).reshape(b, t, h * dk)
        return self.w_o(merged)


class TransformerBlock(Module):
    """Post-norm block: self-attention and a GELU feed-forward, each with residual + LayerNorm."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, ffn_mult: int = 2):
        self.attn = MultiHeadAttention(d, heads, rng)
        self.norm1 = LayerNorm(d)
        self.ffn = MLP([d, ffn_mult * d, d], rng)
        self.norm2 = LayerNorm(d)

    def __call__(self, x):
        x = self.norm1(x + self.attn(x, x))
        return self.norm2(x + self.ffn(x))


def append_token(x, token):
    """Concatenate a (batch, 1, d) or (d,) token after the token axis of ``x``."""
    if token.ndim == 1:
        token = Tensor(np.zeros((x.shape[0], 1, 1))) + token.reshape(1, 1, -1)
    return concat([x, token], axis=1)
