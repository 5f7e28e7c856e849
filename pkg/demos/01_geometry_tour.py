"""
A tour of the geometry helpers
==============================

Chamfer distance, neighbor search and cross-construction on tiny clouds,
small enough to check by hand.
"""

import numpy as np

from tacorr.geometry import chamfer_distance, knn_euclidean, max_pairwise_distance, normalize
from tacorr.template_gen import Template, cross_construct

# Two points each. Nearest-neighbor squared distances are 0 and 1 one way,
# 0 and 4 the other, so the symmetric chamfer is 0.5 + 2.0.
x = np.array([[0.0, 0, 0], [1, 0, 0]])
y = np.array([[0.0, 0, 0], [0, 2, 0]])
print("chamfer:", float(chamfer_distance(x, y).data))

# Neighbor search breaks ties toward the lower index.
grid = np.array([[1.0, 0, 0], [-1, 0, 0], [0, 1, 0]])
print("2 nearest to the origin:", knn_euclidean(np.zeros((1, 3)), grid, 2))

# normalize() centers a cloud and scales it into the unit ball.
rng = np.random.default_rng(0)
cloud = normalize(rng.normal(loc=5.0, scale=3.0, size=(200, 3)))
print("radius after normalize:", np.linalg.norm(cloud, axis=1).max().round(6),
      " diameter:", round(max_pairwise_distance(cloud), 3))

# Cross-construction rebuilds each query point as a softmax-weighted mix of
# its latent neighbors in the template. With equal similarity to two
# template points the result lands on their midpoint.
template = Template(np.array([[0.0, 0, 0], [2, 4, 6], [9, 9, 9]]),
                    np.array([[1.0, 0], [1, 0], [0, 1]]))
print("midpoint:", cross_construct(np.array([[1.0, 0]]), template, 2).data)
