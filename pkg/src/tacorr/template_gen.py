"""Learnable shape templates, the space aligner, and the template-learning losses."""

from __future__ import annotations

import numpy as np

from .diffcore import AttentionBlock, Linear, Module, Parameter, Tensor, smooth_l1, softmax_rows
from .diffcore import as_tensor, index, take_along_rows
from .geometry import chamfer_distance, top_k_rows
from .geometry.core import _data


class Template(Module):
    def __init__(self, positions, embeddings):
        self.positions = positions if isinstance(positions, Parameter) else Parameter(positions)
        self.embeddings = embeddings if isinstance(embeddings, Parameter) else Parameter(embeddings)

    @property
    def n_points(self):
        return self.positions.shape[0]


class SelectedTemplate:
    """A template as seen by the losses: plain tensors, possibly a weighted mix."""

    def __init__(self, positions, embeddings):
        self.positions = positions
        self.embeddings = embeddings


class TemplateBank(Module):
    def __init__(self, templates):
        if not templates:
            raise ValueError("a template bank needs at least one template")
        n, d = templates[0].positions.shape[0], templates[0].embeddings.shape[1]
        for t in templates:
            if t.positions.shape != (n, 3) or t.embeddings.shape != (n, d):
                raise ValueError("all templates must share N_T and d")
        self.templates = list(templates)

    def __len__(self):
        return len(self.templates)

    def __getitem__(self, i):
        return self.templates[i]

    @property
    def n_points(self):
        return self.templates[0].positions.shape[0]

    @property
    def dim(self):
        return self.templates[0].embeddings.shape[1]


def _fit_count(pts, n, rng):
    if len(pts) >= n:
        return pts[:n]
    extra = rng.choice(len(pts), size=n - len(pts), replace=True)
    return np.concatenate([pts, pts[extra]])


def init_bank(k, n_points, d, seed_clouds, rng, std=0.02):
    """K templates: positions copied from dataset shapes, embeddings ~ N(0, std^2)."""
    if not seed_clouds:
        raise ValueError("init_bank needs at least one seed cloud")
    picks = rng.choice(len(seed_clouds), size=k, replace=len(seed_clouds) < k)
    templates = []
    for i in picks:
        pts = _fit_count(np.array(_data(seed_clouds[i]), dtype=np.float64), n_points, rng)
        templates.append(Template(pts, rng.normal(0.0, std, size=(n_points, d))))
    return TemplateBank(templates)


class SpaceAligner(Module):
    """Two self-attention blocks and a linear head mapping embeddings to xyz."""

    def __init__(self, d, rng):
        self.blocks = [AttentionBlock(d, rng), AttentionBlock(d, rng)]
        self.head = Linear(d, 3, rng)

    def __call__(self, feats) -> Tensor:
        h = feats
        for block in self.blocks:
            h = block(h)
        return self.head(h)


def space_aligner(feats, params: SpaceAligner) -> Tensor:
    return params(feats)


def align_loss(positions, feats, params: SpaceAligner) -> Tensor:
    """Smooth-L1 between true positions and the aligner's prediction.

    Callers pass detached encoder features so no gradient reaches the encoder.
    """
    return smooth_l1(params(feats), positions)


def construct(query_feats, ref_feats, ref_points, k, exclude_self=False):
    """Rebuild one point per query row from its k latent neighbors in the reference.

    Weights are the softmax of the dot-product similarities restricted to
    the k neighbors. ``exclude_self`` drops the diagonal (query set == ref set).
    Returns ``(points, neighbor_idx, weights)``.
    """
    query_feats, ref_feats, ref_points = map(as_tensor, (query_feats, ref_feats, ref_points))
    sim = query_feats @ ref_feats.T
    n_ref = sim.shape[1] - (1 if exclude_self else 0)
    if k > n_ref:
        raise ValueError(f"k={k} exceeds the {n_ref} available neighbors")
    scores = sim.data.copy()
    if exclude_self:
        np.fill_diagonal(scores, -np.inf)
    nbr = top_k_rows(scores, k)
    w = softmax_rows(take_along_rows(sim, nbr))
    pts = index(ref_points, nbr)
    out = (w.reshape(w.shape + (1,)) * pts).sum(axis=1)
    return out, nbr, w


def cross_construct(source_feats, template, k):
    """Template positions reconstructed per source point (N x 3)."""
    out, _, _ = construct(source_feats, template.embeddings, template.positions, k)
    return out


def template_construction_loss(template, feats_x, feats_y, k):
    """CD(P_T, T_hat_X) + CD(P_T, T_hat_Y). Callers pass detached features."""
    return (chamfer_distance(template.positions, cross_construct(feats_x, template, k))
            + chamfer_distance(template.positions, cross_construct(feats_y, template, k)))
