"""Composite differentiable functions used by the correspondence losses."""

from __future__ import annotations

import numpy as np

from .tensor import NumericError, ShapeError, Tensor, as_tensor


class ContractError(ValueError):
    """An input violates an op's stated precondition."""


def softmax_rows(m):
    """Row-wise softmax of a 2-d (or batched n-d, last axis) tensor."""
    m = as_tensor(m)
    if np.isnan(m.data).any():
        raise NumericError("softmax_rows: NaN input")
    z = m.data - m.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)
    return Tensor._from_op(out, (m,), backward, "softmax_rows")


def log_softmax_rows(m):
    m = as_tensor(m)
    z = m.data - m.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)
    return Tensor._from_op(out, (m,), backward, "log_softmax_rows")


def smooth_l1(pred, target, beta=1.0):
    """Mean Huber-style loss: 0.5 e^2/beta inside |e| < beta, |e| - beta/2 outside."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"smooth_l1: shape mismatch {pred.shape} vs {target.shape}")
    e = pred.data - target.data
    ae = np.abs(e)
    inside = ae < beta
    val = np.where(inside, 0.5 * e * e / beta, ae - 0.5 * beta).mean()
    dval = np.where(inside, e / beta, np.sign(e)) / e.size

    def backward(g):
        return (g * dval, -g * dval)
    return Tensor._from_op(np.asarray(val), (pred, target), backward, "smooth_l1")


def cross_entropy_rows(target, pred_logits, atol=1e-5):
    """Mean over rows of ``-sum_j target_ij * log softmax(pred)_ij``.

    ``target`` must be row-stochastic and is treated as a constant.
    """
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    pred_logits = as_tensor(pred_logits)
    if t.shape != pred_logits.shape:
        raise ShapeError(f"cross_entropy_rows: shape mismatch {t.shape} vs {pred_logits.shape}")
    if (t < -atol).any() or not np.allclose(t.sum(axis=-1), 1.0, rtol=0, atol=atol):
        raise ContractError("cross_entropy_rows: target rows must be distributions")
    logp = log_softmax_rows(pred_logits)
    return -(logp * Tensor(t)).sum() * (1.0 / t.shape[0])


def gumbel_noise(shape, rng):
    u = rng.random(shape)
    u = np.clip(u, np.finfo(np.float64).tiny, 1.0 - np.finfo(np.float64).eps)
    return -np.log(-np.log(u))


def one_hot(index, k):
    v = np.zeros(k)
    v[index] = 1.0
    return v


def gumbel_softmax(logits, temperature=1.0, hard=False, rng=None):
    """Gumbel-Softmax relaxation of a categorical draw over ``logits`` (K,).

    Without ``rng`` no noise is added. In hard mode the forward value is the
    exact one-hot of the argmax and the backward pass uses the soft weights'
    Jacobian (straight-through).
    """
    if temperature <= 0:
        raise ValueError(f"gumbel_softmax: temperature must be positive, got {temperature}")
    logits = as_tensor(logits)
    noise = gumbel_noise(logits.shape, rng) if rng is not None else 0.0
    z = (logits.data + noise) / temperature
    z = z - z.max()
    e = np.exp(z)
    soft = e / e.sum()

    def backward(g):
        return ((soft * (g - (g * soft).sum())) / temperature,)
    if not hard:
        return Tensor._from_op(soft, (logits,), backward, "gumbel_softmax")
    out = one_hot(int(np.argmax(soft)), soft.shape[0])
    return Tensor._from_op(out, (logits,), backward, "gumbel_softmax_hard")


def cosine_similarity(a, b, eps=1e-12):
    """Cosine of the angle between two vectors."""
    a, b = as_tensor(a), as_tensor(b)
    num = (a * b).sum()
    den = ((a * a).sum() + eps).sqrt() * ((b * b).sum() + eps).sqrt()
    return num / den
