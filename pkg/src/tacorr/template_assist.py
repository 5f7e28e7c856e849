"""Template selection, correlation fusion, and the direct / transitive similarities."""

from __future__ import annotations

import math

import numpy as np

from .diffcore import (
    FeedForward,
    Linear,
    Module,
    Tensor,
    as_tensor,
    cosine_similarity,
    cross_entropy_rows,
    gumbel_softmax,
    init_weight,
    one_hot,
    softmax_rows,
    stack,
)
from .diffcore import scaled_attention
from .geometry import chamfer_distance
from .template_gen import SelectedTemplate


def mix_pool(feats) -> Tensor:
    """Average of column-wise max pooling and mean pooling."""
    feats = as_tensor(feats)
    if len(feats) == 0:
        raise ValueError("mix_pool of an empty feature matrix")
    return (feats.max(axis=0) + feats.mean(axis=0)) * 0.5


def selector_scores(bank, x, y, feats_x, feats_y):
    """Per-template (total, semantic, geometric) score vectors, each of shape (K,).

    Semantic: cosine of mix-pooled embeddings against both clouds' pooled
    features. Geometric: negated chamfer distance to both clouds, so a closer
    template scores higher.
    """
    px, py = mix_pool(feats_x), mix_pool(feats_y)
    sem, geo = [], []
    for t in bank.templates:
        pt = mix_pool(t.embeddings)
        sem.append(cosine_similarity(pt, px) + cosine_similarity(pt, py))
        geo.append(-(chamfer_distance(t.positions, x) + chamfer_distance(t.positions, y)))
    semantic, geometric = stack(sem), stack(geo)
    return semantic + geometric, semantic, geometric


def select_template(bank, x, y, feats_x, feats_y, mode="eval", rng=None,
                    temperature=1.0, hard=True):
    """Pick a template for the pair ``(x, y)``; returns ``(index, weights)``.

    Train mode draws Gumbel-Softmax weights (hard straight-through by
    default). Eval mode is a deterministic argmax one-hot and uses no rng.
    """
    if len(bank) == 0:
        raise ValueError("select_template: empty bank")
    if len(bank) == 1:
        return 0, Tensor(np.ones(1))
    total, _, _ = selector_scores(bank, x, y, feats_x, feats_y)
    if mode == "eval":
        idx = int(np.argmax(total.data))
        return idx, Tensor(one_hot(idx, len(bank)))
    if mode != "train":
        raise ValueError(f"unknown selection mode {mode!r}")
    weights = gumbel_softmax(total, temperature, hard=hard, rng=rng)
    return int(np.argmax(weights.data)), weights


def mix_templates(bank, weights, idx):
    """The selected template, weighted so selector logits receive gradient.

    With constant one-hot weights this is just ``bank[idx]``. Otherwise each position
    and embedding is ``sum_i w_i * template_i`` (exactly template ``idx`` in
    the forward pass when the weights are one-hot).
    """
    wd = weights.data
    if not weights.requires_grad and wd[idx] == 1.0 and np.count_nonzero(wd) == 1:
        t = bank[idx]
        return SelectedTemplate(t.positions, t.embeddings)
    pos = emb = None
    for i, t in enumerate(bank.templates):
        w = weights[i]
        pos = w * t.positions if pos is None else pos + w * t.positions
        emb = w * t.embeddings if emb is None else emb + w * t.embeddings
    return SelectedTemplate(pos, emb)


class CorrelationFusion(Module):
    """Inject template correlation into point features via attention.

    ``C = F F_T^T`` is projected to d dims and used as attention values, with
    queries and keys from ``F``; both sublayers are residual.
    """

    def __init__(self, d, n_template_points, rng):
        self.d = d
        self.corr_proj = Linear(n_template_points, d, rng)
        self.wq = init_weight(rng, d, d)
        self.wk = init_weight(rng, d, d)
        self.mlp = FeedForward(d, d, rng)

    def __call__(self, feats, template_embeddings) -> Tensor:
        feats = as_tensor(feats)
        emb = as_tensor(template_embeddings)
        if feats.shape[1] != self.d or emb.shape[1] != self.d:
            raise ValueError(
                f"correlation_fusion: feature dim {feats.shape[1]} / template dim "
                f"{emb.shape[1]} != {self.d}")
        corr = feats @ emb.T
        values = self.corr_proj(corr * (1.0 / math.sqrt(self.d)))
        h = feats + scaled_attention(feats @ self.wq, feats @ self.wk, values)
        return h + self.mlp(h)


def correlation_fusion(feats, template, params: CorrelationFusion) -> Tensor:
    return params(feats, template.embeddings)


def direct_similarity(fx, fy) -> Tensor:
    fx, fy = as_tensor(fx), as_tensor(fy)
    if fx.shape[1] != fy.shape[1]:
        raise ValueError(f"direct_similarity: dims {fx.shape[1]} vs {fy.shape[1]}")
    return fx @ fy.T


def transitive_similarity(fx, template, fy) -> Tensor:
    """Row-stochastic source -> template -> target similarity."""
    fx, fy = as_tensor(fx), as_tensor(fy)
    emb = as_tensor(template.embeddings)
    if not fx.shape[1] == emb.shape[1] == fy.shape[1]:
        raise ValueError(
            f"transitive_similarity: dims {fx.shape[1]}, {emb.shape[1]}, {fy.shape[1]}")
    s_xt = fx @ emb.T
    s_ty = emb @ fy.T
    return softmax_rows(s_xt) @ softmax_rows(s_ty)


def transitive_loss(s_xty, s_xy) -> Tensor:
    """Cross-entropy of the direct logits against the (detached) transitive target."""
    target = s_xty.data if isinstance(s_xty, Tensor) else np.asarray(s_xty)
    return cross_entropy_rows(target, s_xy)
