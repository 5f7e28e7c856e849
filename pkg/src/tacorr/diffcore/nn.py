"""Parameter containers and the attention block."""

from __future__ import annotations

import math

import numpy as np

from .functional import softmax_rows
from .tensor import Parameter, ShapeError, Tensor, as_tensor


class Module:
    """Base class collecting :class:`Parameter` attributes recursively.

    Names are dotted attribute paths (``blocks.0.wq``), which double as
    checkpoint keys.
    """

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            yield from _walk(value, prefix + key)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValueError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ShapeError(f"{name}: expected shape {p.data.shape}, got {arr.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)


def _walk(value, name):
    if isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


def init_weight(rng, fan_in, fan_out, name=None):
    return Parameter(rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)), name=name)


class Linear(Module):
    def __init__(self, fan_in, fan_out, rng, bias=True):
        self.weight = init_weight(rng, fan_in, fan_out)
        self.bias = Parameter(np.zeros(fan_out)) if bias else None

    def __call__(self, x):
        x = as_tensor(x)
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(f"Linear: input dim {x.shape[-1]} != {self.weight.shape[0]}")
        if x.ndim != 2:
            lead = x.shape[:-1]
            y = x.reshape(-1, x.shape[-1]) @ self.weight
            y = y.reshape(lead + (self.weight.shape[1],))
        else:
            y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class FeedForward(Module):
    def __init__(self, d, hidden, rng):
        self.fc1 = Linear(d, hidden, rng)
        self.fc2 = Linear(hidden, d, rng)

    def __call__(self, x):
        return self.fc2(self.fc1(x).relu())


def scaled_attention(q, k, v):
    """softmax(q k^T / sqrt(d)) v for 2-d tensors."""
    scores = (q @ k.T) * (1.0 / math.sqrt(q.shape[1]))
    return softmax_rows(scores) @ v


class AttentionBlock(Module):
    """Single-head attention with residual, then a residual feed-forward layer.

    ``h = x + softmax(x Wq (kv Wk)^T / sqrt(d)) kv Wv``; ``out = h + FFN(h)``.
    Called with one argument it is self-attention.
    """

    def __init__(self, d, rng, hidden=None):
        self.d = d
        self.wq = init_weight(rng, d, d)
        self.wk = init_weight(rng, d, d)
        self.wv = init_weight(rng, d, d)
        self.ffn = FeedForward(d, hidden or d, rng)

    def __call__(self, query_in, kv_in=None):
        query_in = as_tensor(query_in)
        kv_in = query_in if kv_in is None else as_tensor(kv_in)
        if query_in.shape[1] != self.d or kv_in.shape[1] != self.d:
            raise ShapeError(
                f"AttentionBlock(d={self.d}): got query dim {query_in.shape[1]}, "
                f"kv dim {kv_in.shape[1]}")
        h = query_in + scaled_attention(query_in @ self.wq, kv_in @ self.wk, kv_in @ self.wv)
        return h + self.ffn(h)


def attention_block(query_in, kv_in, params: AttentionBlock) -> Tensor:
    return params(query_in, kv_in)
