"""
Checking gradients by finite differences
========================================

Every differentiable op in the package is registered with a small random
instance. This runs a few of them, then shows that a deliberately wrong
gradient is caught.
"""

from tacorr import gradsuite

ops = ["matmul", "softmax_rows", "chamfer_distance", "cross_construct", "transitive_similarity"]
print(gradsuite.format_table(gradsuite.run_suite(n_seeds=5, names=ops)))
print()
print(gradsuite.format_table(gradsuite.run_suite(n_seeds=2, names=["relu"], corrupt=("relu",))))

# the whole suite, as the CLI runs it: `tacorr gradcheck`
