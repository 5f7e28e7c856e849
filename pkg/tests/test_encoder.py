import numpy as np
import pytest

from tacorr.diffcore import finite_diff_check
from tacorr.encoder import PointEncoder, encode


def test_output_shape(rng):
    enc = PointEncoder(16, 2, rng, k=5)
    for n in (5, 9, 40):
        assert encode(rng.normal(size=(n, 3)), enc).shape == (n, 16)


def test_too_few_points(rng):
    with pytest.raises(ValueError):
        PointEncoder(8, 1, rng, k=10)(rng.normal(size=(6, 3)))
    with pytest.raises(ValueError):
        PointEncoder(8, 0, rng)


@pytest.mark.parametrize("seed", range(10))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    enc = PointEncoder(12, 2, rng, k=6)
    pts = rng.normal(size=(30, 3))
    perm = rng.permutation(30)
    np.testing.assert_allclose(enc(pts[perm]).data, enc(pts).data[perm], atol=1e-5)


def test_translation_invariance_without_coordinates(rng):
    pts = rng.normal(size=(25, 3))
    shift = np.array([3.0, -2.0, 0.5])
    blind = PointEncoder(8, 2, np.random.default_rng(5), k=6, use_coords=False)
    np.testing.assert_allclose(blind(pts + shift).data, blind(pts).data, atol=1e-6)
    sighted = PointEncoder(8, 2, np.random.default_rng(5), k=6)
    assert np.abs(sighted(pts + shift).data - sighted(pts).data).max() > 1e-3


def test_deterministic_for_fixed_seed(rng):
    pts = rng.normal(size=(20, 3))
    a = PointEncoder(8, 2, np.random.default_rng(9), k=4)(pts).data
    b = PointEncoder(8, 2, np.random.default_rng(9), k=4)(pts).data
    assert np.array_equal(a, b)


def test_gradient_on_eight_points(rng):
    enc = PointEncoder(8, 2, rng, k=4)
    pts = rng.normal(size=(8, 3))
    w = rng.normal(size=(8, 8))
    assert finite_diff_check(lambda *_: (enc(pts) * w).sum(), enc.parameters()) < 1e-4
