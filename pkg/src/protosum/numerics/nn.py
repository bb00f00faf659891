"""Transformer building blocks on top of :mod:`protosum.numerics.tensor`.

All sequence tensors are batched as ``(batch, length, d_model)``. Attention
masks are additive arrays broadcastable to ``(batch, heads, n_query, n_key)``.
Every attention layer returns its per-head weights alongside its output.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import NEG_INF, Tensor


class Module:
    """Parameter container. Parameters are discovered in attribute order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Current gradients; parameters untouched by the last backward get zeros."""
        return {
            name: p.grad if p.grad is not None else np.zeros_like(p.data)
            for name, p in self.parameters().items()
        }

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {state[name].shape}")
            p.data = np.array(state[name], dtype=T.DTYPE)

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters().values())


def uniform(rng: np.random.Generator, shape, limit: float) -> Tensor:
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = uniform(rng, (d_in, d_out), np.sqrt(6.0 / (d_in + d_out)))
        self.bias = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta)


class Embedding(Module):
    def __init__(self, n: int, d: int, rng: np.random.Generator):
        # unit variance entries
        self.weight = uniform(rng, (n, d), np.sqrt(3.0))

    def __call__(self, ids) -> Tensor:
        return T.embedding(self.weight, ids)


def positional_encoding(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def padding_mask(pad: np.ndarray) -> np.ndarray:
    """Additive key mask of shape (B, 1, 1, L) from a boolean (B, L) pad flag."""
    return np.where(pad, NEG_INF, 0.0)[:, None, None, :]


def causal_mask(n: int) -> np.ndarray:
    return np.triu(np.full((n, n), NEG_INF), k=1)[None, None]


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, n, d = x.shape
    return x.reshape(b, n, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    b, h, n, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dk)


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, n_heads: int, mask=None):
    """Scaled dot-product attention over ``n_heads`` slices of the model dimension.

    Inputs are ``(B, n, d)`` (already projected). Returns the merged output
    ``(B, n_q, d)`` and the weights ``(B, n_heads, n_q, n_k)``; head 0 is
    ``weights[:, 0]``.
    """
    d = q.shape[-1]
    if d % n_heads:
        raise ValueError(f"model dimension {d} is not divisible by {n_heads} heads")
    if k.shape[-1] != d or v.shape[-1] != d:
        raise T.ShapeError(f"multi_head_attention: incompatible shapes {q.shape}, {k.shape} and {v.shape}")
    qh, kh, vh = (_split_heads(x, n_heads) for x in (q, k, v))
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(d // n_heads))
    weights = T.softmax(scores, axis=-1, mask=mask)
    return _merge_heads(weights @ vh), weights


class MultiHeadAttention(Module):
    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        if d_model % n_heads:
            raise ValueError(f"model dimension {d_model} is not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.wq = Linear(d_model, d_model, rng)
        # a key bias shifts every score in a row equally, so softmax ignores it
        self.wk = Linear(d_model, d_model, rng, bias=False)
        self.wv = Linear(d_model, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)

    def __call__(self, query: Tensor, memory: Tensor, mask=None):
        out, weights = multi_head_attention(
            self.wq(query), self.wk(memory), self.wv(memory), self.n_heads, mask
        )
        return self.wo(out), weights


class FeedForward(Module):
    def __init__(self, d_model: int, width: int, rng: np.random.Generator):
        self.inner = Linear(d_model, width, rng)
        self.outer = Linear(width, d_model, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(T.relu(self.inner(x)))


class EncoderBlock(Module):
    """Pre-norm self-attention block."""

    def __init__(self, d_model: int, n_heads: int, ffn_width: int, rng: np.random.Generator):
        self.ln_attn = LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, n_heads, rng)
        self.ln_ffn = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, ffn_width, rng)

    def __call__(self, x: Tensor, mask=None):
        h = self.ln_attn(x)
        a, weights = self.attn(h, h, mask)
        x = x + a
        return x + self.ffn(self.ln_ffn(x)), weights


class CrossBlock(Module):
    """Self-attention, attention over another sequence, then the FFN.

    Serves as both the dual encoder block (memory = the other text's encoder
    output) and the decoder block (causal self mask, memory = encoder output).
    """

    def __init__(self, d_model: int, n_heads: int, ffn_width: int, rng: np.random.Generator):
        self.ln_self = LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(d_model, n_heads, rng)
        self.ln_cross = LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, n_heads, rng)
        self.ln_ffn = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, ffn_width, rng)

    def __call__(self, x: Tensor, memory: Tensor, self_mask=None, memory_mask=None):
        h = self.ln_self(x)
        a, _ = self.self_attn(h, h, self_mask)
        x = x + a
        c, cross_weights = self.cross_attn(self.ln_cross(x), memory, memory_mask)
        x = x + c
        return x + self.ffn(self.ln_ffn(x)), cross_weights


class EncoderStack(Module):
    def __init__(self, n_blocks, d_model, n_heads, ffn_width, rng):
        self.blocks = [EncoderBlock(d_model, n_heads, ffn_width, rng) for _ in range(n_blocks)]
        self.ln_out = LayerNorm(d_model)

    def __call__(self, x: Tensor, mask=None) -> Tensor:
        for block in self.blocks:
            x, _ = block(x, mask)
        return self.ln_out(x)


class CrossStack(Module):
    """Stack of :class:`CrossBlock`; returns the output and the last block's
    cross-attention weights."""

    def __init__(self, n_blocks, d_model, n_heads, ffn_width, rng):
        self.blocks = [CrossBlock(d_model, n_heads, ffn_width, rng) for _ in range(n_blocks)]
        self.ln_out = LayerNorm(d_model)

    def __call__(self, x: Tensor, memory: Tensor, self_mask=None, memory_mask=None):
        weights = None
        for block in self.blocks:
            x, weights = block(x, memory, self_mask, memory_mask)
        return self.ln_out(x), weights
