"""Per-point feature extraction: local k-NN embedding plus self-attention layers."""

from __future__ import annotations

import numpy as np

from .diffcore import AttentionBlock, Linear, Module, Tensor
from .geometry import knn_euclidean
from .geometry.core import _data


class PointEncoder(Module):
    """Max-pooled MLP over each point's k-NN frame, then ``n_layers`` attention blocks.

    The per-neighbor input is ``[p, q - p]``. With ``use_coords=False`` the
    absolute-position half is zeroed, which makes the features
    translation invariant.
    """

    def __init__(self, d, n_layers, rng, k=10, use_coords=True):
        if n_layers < 1:
            raise ValueError("the encoder needs at least one attention layer")
        self.d = d
        self.k = k
        self.use_coords = use_coords
        self.embed_in = Linear(6, d, rng)
        self.embed_out = Linear(d, d, rng)
        self.blocks = [AttentionBlock(d, rng) for _ in range(n_layers)]

    def local_frames(self, points):
        pts = _data(points)
        if len(pts) < self.k:
            raise ValueError(f"encoder needs at least k={self.k} points, got {len(pts)}")
        nbr = knn_euclidean(pts, pts, self.k)
        offsets = pts[nbr] - pts[:, None, :]
        center = np.broadcast_to(pts[:, None, :], offsets.shape)
        if not self.use_coords:
            center = np.zeros_like(offsets)
        return np.concatenate([center, offsets], axis=2)

    def __call__(self, points) -> Tensor:
        frames = Tensor(self.local_frames(points))
        h = self.embed_out(self.embed_in(frames).relu())
        h = h.max(axis=1)
        for block in self.blocks:
            h = block(h)
        return h


def encode(cloud, params: PointEncoder) -> Tensor:
    return params(cloud)
