"""Covariance pooling tests with a brute-force oracle."""

import numpy as np
import pytest

from covfer import pooling
from covfer.errors import RegionOutOfBounds, RegionTooSmall

from conftest import make_rng


def brute_force_covariance(tensor: np.ndarray) -> np.ndarray:
    """Two-pass reference: explicit mean, then an explicit loop of outer
    products."""
    c, h, w = tensor.shape
    obs = [tensor[:, i, j].astype(np.float64) for i in range(h) for j in range(w)]
    mu = sum(obs) / len(obs)
    acc = np.zeros((c, c))
    for v in obs:
        d = v - mu
        acc += np.outer(d, d)
    return acc / len(obs)


def test_constant_tensor_zero_covariance():
    t = np.full((3, 4, 4), 2.5)
    assert np.array_equal(pooling.region_covariance(t), np.zeros((3, 3)))


def test_two_pixel_hand_example():
    t = np.zeros((2, 1, 2))
    t[0, 0, 0] = 0.0
    t[0, 0, 1] = 2.0
    cov = pooling.region_covariance(t)
    assert np.array_equal(cov, np.array([[1.0, 0.0], [0.0, 0.0]]))


@pytest.mark.parametrize("seed", range(5))
def test_matches_brute_force(seed):
    t = make_rng(900 + seed).standard_normal((6, 5, 7))
    got = pooling.region_covariance(t)
    ref = brute_force_covariance(t)
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) <= 1e-10


def test_translation_invariance():
    rng = make_rng(1)
    t = rng.standard_normal((4, 6, 6))
    shift = rng.standard_normal(4)
    shifted = t + shift[:, None, None]
    a = pooling.region_covariance(t)
    b = pooling.region_covariance(shifted)
    assert np.abs(a - b).max() <= 1e-10 * max(1.0, np.abs(a).max())


def test_quadratic_scaling():
    t = make_rng(2).standard_normal((4, 6, 6))
    s = 3.0
    a = pooling.region_covariance(t)
    b = pooling.region_covariance(s * t)
    assert np.abs(b - s * s * a).max() <= 1e-10 * max(1.0, np.abs(s * s * a).max())


def test_vgg_scale_rank_bound():
    # 196 observations cannot span 512 dimensions
    t = make_rng(3).standard_normal((512, 14, 14))
    cov = pooling.region_covariance(t)
    assert cov.shape == (512, 512)
    vals = np.linalg.eigvalsh(cov)
    rank = int((vals > vals.max() * 1e-10).sum())
    assert rank <= 196
    ridged = pooling.pool_covariance(t)
    assert np.linalg.eigvalsh(ridged).min() > 0.0


def test_symmetry_exact():
    cov = pooling.region_covariance(make_rng(4).standard_normal((8, 9, 9)))
    assert np.array_equal(cov, cov.T)


def test_region_errors():
    t = np.zeros((2, 4, 4))
    with pytest.raises(RegionOutOfBounds):
        pooling.region_covariance(t, pooling.Region(2, 2, 4, 4))
    with pytest.raises(RegionTooSmall):
        pooling.region_covariance(t, pooling.Region(0, 0, 1, 1))


# ------------------------------------------------------------ region grids


def test_global_spec_single_descriptor():
    t = make_rng(5).standard_normal((3, 6, 6))
    out = pooling.pool_regions(t, levels=(1,))
    assert len(out) == 1
    assert np.array_equal(out[0], pooling.pool_covariance(t))


def test_default_spec_five_descriptors_on_14x14():
    t = make_rng(6).standard_normal((4, 14, 14))
    out = pooling.pool_regions(t, levels=(1, 2))
    assert len(out) == 5
    tiles = pooling.tile_grid(14, 14, 2)
    assert all(r.height == 7 and r.width == 7 for r in tiles)


def test_three_level_spec_21_descriptors_balanced_tiles():
    t = make_rng(7).standard_normal((4, 14, 14))
    out = pooling.pool_regions(t, levels=(1, 2, 4))
    assert len(out) == 21
    tiles = pooling.tile_grid(14, 14, 4)
    extents = sorted({(r.height, r.width) for r in tiles})
    assert {e for pair in extents for e in pair} == {3, 4}
    assert sum(r.height * r.width for r in tiles) == 196


def test_tiles_cover_row_major():
    tiles = pooling.tile_grid(4, 4, 2)
    assert tiles == [
        pooling.Region(0, 0, 2, 2),
        pooling.Region(0, 2, 2, 2),
        pooling.Region(2, 0, 2, 2),
        pooling.Region(2, 2, 2, 2),
    ]


def test_undersized_tiles_rejected():
    t = np.zeros((2, 14, 14))
    with pytest.raises(RegionTooSmall):
        pooling.pool_regions(t, levels=(1, 8))  # 14/8 -> 1-pixel tiles


def test_levels_validation():
    with pytest.raises(ValueError):
        pooling.validate_levels((2, 4))  # missing the global level
    with pytest.raises(ValueError):
        pooling.validate_levels(())
    assert pooling.validate_levels((2, 1, 2)) == (1, 2)
