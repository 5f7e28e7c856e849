import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tacorr.diffcore import Parameter, finite_diff_check
from tacorr.geometry.io import GRAY
from tacorr.geometry import (
    CloudFormatError,
    PointCloud,
    chamfer_distance,
    export_correspondence_ply,
    knn_euclidean,
    knn_latent,
    load_cloud,
    max_pairwise_distance,
    normalize,
    save_cloud,
)

CUBE = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)


# brute-force oracles: plain Python loops, no vectorization shared with the library

def brute_knn(affinity_fn, queries, refs, k):
    out = []
    for q in queries:
        scored = [(affinity_fn(q, r), j) for j, r in enumerate(refs)]
        # highest affinity first, then the lower index
        scored.sort(key=lambda t: (-t[0], t[1]))
        out.append([j for _, j in scored[:k]])
    return np.array(out)


def dot(a, b):
    return sum(float(x) * float(y) for x, y in zip(a, b))


def neg_sq(a, b):
    return -sum((float(x) - float(y)) ** 2 for x, y in zip(a, b))


def brute_chamfer(x, y):
    fwd = sum(min(-neg_sq(p, q) for q in y) for p in x) / len(x)
    bwd = sum(min(-neg_sq(p, q) for p in x) for q in y) / len(y)
    return fwd + bwd


def brute_diameter(y):
    return max(math.sqrt(-neg_sq(p, q)) for p in y for q in y)


def random_instance(rng, grid=False):
    n, m = rng.integers(1, 65, size=2)
    d = int(rng.integers(1, 9))
    if grid:  # small integer coordinates force plenty of exact ties
        return rng.integers(-2, 3, size=(n, d)).astype(float), rng.integers(-2, 3, size=(m, d)).astype(float)
    return rng.normal(size=(n, d)), rng.normal(size=(m, d))


# -- kNN -----------------------------------------------------------------------

def test_knn_latent_examples():
    eye = np.eye(3)
    assert knn_latent(eye, eye, 1).ravel().tolist() == [0, 1, 2]
    assert knn_latent(eye[[1]], eye, 2).tolist() == [[1, 0]]
    with pytest.raises(ValueError):
        knn_latent(eye, eye, 4)


def test_knn_euclidean_examples():
    ref = np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0]])
    assert knn_euclidean(np.array([[0.9, 0, 0]]), ref, 2).tolist() == [[1, 0]]
    assert knn_euclidean(ref[[2]], ref, 1).tolist() == [[2]]
    with pytest.raises(ValueError):
        knn_euclidean(ref, ref, 4)


@pytest.mark.parametrize("grid", [False, True])
def test_knn_latent_matches_exhaustive_scan(grid):
    rng = np.random.default_rng(11 + grid)
    for _ in range(100):
        q, r = random_instance(rng, grid)
        k = int(rng.integers(1, len(r) + 1))
        np.testing.assert_array_equal(knn_latent(q, r, k), brute_knn(dot, q, r, k))


@pytest.mark.parametrize("grid", [False, True])
def test_knn_euclidean_matches_exhaustive_scan(grid):
    rng = np.random.default_rng(21 + grid)
    for _ in range(100):
        n, m = rng.integers(1, 65, size=2)
        if grid:
            q, r = rng.integers(-2, 3, size=(n, 3)).astype(float), rng.integers(-2, 3, size=(m, 3)).astype(float)
        else:
            q, r = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
        k = int(rng.integers(1, m + 1))
        np.testing.assert_array_equal(knn_euclidean(q, r, k), brute_knn(neg_sq, q, r, k))


# -- chamfer -------------------------------------------------------------------

def test_chamfer_hand_value():
    x = np.array([[0.0, 0, 0], [1, 0, 0]])
    y = np.array([[0.0, 0, 0], [0, 2, 0]])
    assert float(chamfer_distance(x, y).data) == pytest.approx(2.5, abs=1e-12)


def test_chamfer_matches_exhaustive_scan():
    rng = np.random.default_rng(31)
    for _ in range(100):
        n, m = rng.integers(1, 65, size=2)
        x, y = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
        assert abs(float(chamfer_distance(x, y).data) - brute_chamfer(x, y)) < 1e-9


def test_chamfer_empty_raises():
    with pytest.raises(ValueError):
        chamfer_distance(np.zeros((0, 3)), np.zeros((2, 3)))


clouds = arrays(np.float64, st.tuples(st.integers(1, 12), st.just(3)),
                elements=st.floats(-5, 5, allow_nan=False))


@given(clouds, clouds, arrays(np.float64, 3, elements=st.floats(-10, 10)))
def test_chamfer_properties(x, y, shift):
    cd = float(chamfer_distance(x, y).data)
    assert cd >= 0
    assert float(chamfer_distance(x, x).data) == 0.0
    assert cd == pytest.approx(float(chamfer_distance(y, x).data), abs=1e-9)
    moved = float(chamfer_distance(x + shift, y + shift).data)
    assert moved == pytest.approx(cd, abs=1e-9 * max(1.0, cd))


def test_chamfer_gradient(rng):
    for _ in range(20):
        x, y = Parameter(rng.normal(size=(6, 3))), Parameter(rng.normal(size=(5, 3)))
        assert finite_diff_check(lambda x, y: chamfer_distance(x, y), [x, y]) < 1e-4


# -- normalize / diameter ------------------------------------------------------

def test_normalize_cube():
    out = normalize(PointCloud(CUBE)).positions
    np.testing.assert_allclose(out.mean(axis=0), 0, atol=1e-12)
    assert np.linalg.norm(out, axis=1).max() == pytest.approx(1.0)


def test_normalize_degenerate():
    np.testing.assert_array_equal(normalize(np.array([[3.0, -1, 2]])), [[0.0, 0, 0]])
    np.testing.assert_array_equal(normalize(np.ones((4, 3))), np.zeros((4, 3)))
    # the mean of identical values can be off by an ulp; that must not be rescaled to norm 1
    out = normalize(np.full((9, 3), 28.45837924))
    assert np.abs(out).max() < 1e-12


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.just(3)),
              elements=st.floats(-100, 100, allow_nan=False)))
def test_normalize_invariants(pts):
    out = normalize(pts)
    np.testing.assert_allclose(out.mean(axis=0), 0, atol=1e-6)
    if np.ptp(pts, axis=0).max() > 1e-3:
        assert np.linalg.norm(out, axis=1).max() == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(normalize(out), out, atol=1e-6)


def test_max_pairwise_distance_examples():
    assert max_pairwise_distance(np.array([[0.0, 0, 0], [0, 3, 0]])) == pytest.approx(3.0)
    assert max_pairwise_distance(CUBE) == pytest.approx(math.sqrt(3))
    with pytest.raises(ValueError):
        max_pairwise_distance(np.zeros((1, 3)))


def test_max_pairwise_distance_matches_exhaustive_scan():
    rng = np.random.default_rng(41)
    for _ in range(100):
        y = rng.normal(size=(int(rng.integers(2, 65)), 3))
        assert abs(max_pairwise_distance(y) - brute_diameter(y)) < 1e-9


def test_point_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0, np.inf, 0]]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((0, 3)))


# -- file I/O ------------------------------------------------------------------

@pytest.mark.parametrize("suffix", [".ply", ".xyz"])
def test_round_trip(tmp_path, rng, suffix):
    cloud = PointCloud(rng.normal(size=(1024, 3)) * 10)
    save_cloud(cloud, tmp_path / f"c{suffix}")
    back = load_cloud(tmp_path / f"c{suffix}")
    assert len(back) == 1024
    assert np.abs(back.positions - cloud.positions).max() < 1e-6


def test_ply_colors_round_trip_exactly(tmp_path, rng):
    colors = rng.integers(0, 256, size=(50, 3)) / 255
    save_cloud(PointCloud(rng.normal(size=(50, 3)), colors), tmp_path / "c.ply")
    back = load_cloud(tmp_path / "c.ply")
    np.testing.assert_array_equal(back.colors, colors)


@pytest.mark.parametrize("text, where", [
    ("ply\nformat ascii 1.0\nelement vertex two\nproperty float x\nend_header\n", ":3"),
    ("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
     "property float z\nend_header\n0 0 0\n", "declares 2"),
    ("plyx\n", ":1"),
    ("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
     "property float z\nend_header\n0 a 0\n", ":8"),
])
def test_malformed_ply_names_the_line(tmp_path, text, where):
    path = tmp_path / "bad.ply"
    path.write_text(text)
    with pytest.raises(CloudFormatError, match=where):
        load_cloud(path)


def test_malformed_xyz(tmp_path):
    path = tmp_path / "bad.xyz"
    path.write_text("0 0 0\n1 2\n")
    with pytest.raises(CloudFormatError, match=":2"):
        load_cloud(path)


def test_export_identity_on_identical_clouds(tmp_path, rng):
    cloud = PointCloud(rng.normal(size=(20, 3)))
    src, tgt = export_correspondence_ply(cloud, cloud, np.arange(20), tmp_path)
    np.testing.assert_array_equal(load_cloud(src).colors, load_cloud(tgt).colors)


def test_export_reversed_and_unmatched(tmp_path, rng):
    cloud = PointCloud(rng.normal(size=(6, 3)))
    src, _ = export_correspondence_ply(cloud, cloud, np.arange(6), tmp_path / "a")
    _, tgt = export_correspondence_ply(cloud, cloud, np.arange(6)[::-1], tmp_path / "b")
    src_col, tgt_col = load_cloud(src).colors, load_cloud(tgt).colors
    np.testing.assert_array_equal(tgt_col, src_col[::-1])
    # everything mapped to target point 0: the other target points stay gray
    _, tgt = export_correspondence_ply(cloud, cloud, np.zeros(6, int), tmp_path / "c")
    np.testing.assert_allclose(load_cloud(tgt).colors[1:], GRAY, atol=1 / 255)


def test_export_rejects_bad_index(tmp_path, rng):
    cloud = PointCloud(rng.normal(size=(4, 3)))
    with pytest.raises(ValueError):
        export_correspondence_ply(cloud, cloud, [0, 1, 2, 4], tmp_path)
    with pytest.raises(ValueError):
        export_correspondence_ply(cloud, cloud, [0, 1], tmp_path)
