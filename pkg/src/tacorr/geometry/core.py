"""Point-cloud neighbor search, chamfer distance and normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import Tensor, as_tensor, index


@dataclass
class PointCloud:
    positions: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError(f"positions must be N x 3, got {self.positions.shape}")
        if len(self.positions) < 1:
            raise ValueError("a point cloud needs at least one point")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64)
            if self.colors.shape != self.positions.shape:
                raise ValueError(f"colors shape {self.colors.shape} != {self.positions.shape}")

    def __len__(self):
        return len(self.positions)


def _data(x):
    if isinstance(x, Tensor):
        return x.data
    if isinstance(x, PointCloud):
        return x.positions
    return np.asarray(x, dtype=np.float64)


def top_k_rows(affinity, k):
    """Indices of the k largest entries per row, ties broken by lower index."""
    affinity = np.asarray(affinity)
    m = affinity.shape[1]
    if not 1 <= k <= m:
        raise ValueError(f"k={k} must lie in [1, {m}]")
    # stable sort keeps lower indices first among equal keys
    return np.argsort(-affinity, axis=1, kind="stable")[:, :k]


def knn_latent(query_feats, ref_feats, k):
    """k reference rows with the highest dot-product similarity per query row."""
    q, r = _data(query_feats), _data(ref_feats)
    if q.shape[1] != r.shape[1]:
        raise ValueError(f"feature dims differ: {q.shape[1]} vs {r.shape[1]}")
    if k > len(r):
        raise ValueError(f"k={k} exceeds reference size {len(r)}")
    return top_k_rows(q @ r.T, k)


def pairwise_sq_dists(a, b):
    a, b = _data(a), _data(b)
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def knn_euclidean(query, ref, k):
    """k nearest reference points per query point (squared Euclidean)."""
    r = _data(ref)
    if k > len(r):
        raise ValueError(f"k={k} exceeds reference size {len(r)}")
    return top_k_rows(-pairwise_sq_dists(query, r), k)


def chamfer_distance(x, y):
    """Symmetric chamfer: mean squared distance to the nearest point, both ways.

    Accepts arrays or tensors; the result is a differentiable scalar whose
    gradient flows through the nearest-neighbor pairs.
    """
    x, y = as_tensor(x), as_tensor(y)
    if len(x) == 0 or len(y) == 0:
        raise ValueError("chamfer_distance: empty cloud")
    d2 = pairwise_sq_dists(x.data, y.data)
    nn_xy = np.argmin(d2, axis=1)
    nn_yx = np.argmin(d2, axis=0)
    dx = x - index(y, nn_xy)
    dy = y - index(x, nn_yx)
    return (dx * dx).sum(axis=1).mean() + (dy * dy).sum(axis=1).mean()


def normalize(cloud):
    """Center at the centroid and scale so the farthest point has norm 1."""
    pts = _data(cloud)
    centered = pts - pts.mean(axis=0)
    scale = np.linalg.norm(centered, axis=1).max()
    # identical points leave only roundoff after centering: treat as degenerate
    if scale > 1e-12 * max(1.0, float(np.abs(pts).max())):
        centered = centered / scale
    if isinstance(cloud, PointCloud):
        return PointCloud(centered, cloud.colors)
    return centered


def max_pairwise_distance(y):
    pts = _data(y)
    if len(pts) < 2:
        raise ValueError("max_pairwise_distance needs at least two points")
    return float(np.sqrt(pairwise_sq_dists(pts, pts).max()))
