from .core import (
    PointCloud,
    chamfer_distance,
    knn_euclidean,
    knn_latent,
    max_pairwise_distance,
    normalize,
    pairwise_sq_dists,
    top_k_rows,
)
from .io import CloudFormatError, coordinate_colors, export_correspondence_ply, load_cloud, save_cloud

__all__ = [
    "CloudFormatError", "PointCloud", "chamfer_distance", "coordinate_colors",
    "export_correspondence_ply", "knn_euclidean", "knn_latent", "load_cloud",
    "max_pairwise_distance", "normalize", "pairwise_sq_dists", "save_cloud", "top_k_rows",
]
