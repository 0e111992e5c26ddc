import numpy as np
import pytest

from gncmix.data import HsiCube
from gncmix.endmembers import extract_endmembers, projection_features
from gncmix.errors import RankDeficiencyError


def _cube_from_columns(cols, width, height):
    refl = np.column_stack(cols)
    return HsiCube(width=width, height=height, bands=refl.shape[0], reflectance=refl)


def test_recovers_pure_pixels():
    rng = np.random.default_rng(0)
    vertices = rng.uniform(0.2, 0.8, size=(6, 3))
    cols = [vertices[:, i % 3] for i in range(12)]
    cube = _cube_from_columns(cols, width=4, height=3)
    lib = extract_endmembers(cube, 3)
    got = {tuple(np.round(lib.means[:, r], 10)) for r in range(3)}
    want = {tuple(np.round(vertices[:, r], 10)) for r in range(3)}
    assert got == want


def test_single_endmember_is_farthest_from_mean():
    rng = np.random.default_rng(1)
    refl = rng.uniform(0.3, 0.7, size=(5, 9))
    refl[:, 4] = 0.95  # clear outlier
    cube = HsiCube(width=3, height=3, bands=5, reflectance=refl)
    lib = extract_endmembers(cube, 1)
    centered = refl - refl.mean(axis=1, keepdims=True)
    farthest = int(np.argmax((centered**2).sum(axis=0)))
    np.testing.assert_allclose(lib.means[:, 0], np.clip(refl[:, farthest], 1e-6, 1 - 1e-6))


def test_outputs_are_image_columns():
    rng = np.random.default_rng(2)
    refl = rng.uniform(0.1, 0.9, size=(7, 20))
    cube = HsiCube(width=5, height=4, bands=7, reflectance=refl)
    lib = extract_endmembers(cube, 4)
    for r in range(4):
        matches = np.all(np.isclose(refl, lib.means[:, r : r + 1], atol=1e-6), axis=0)
        assert matches.any()


def test_constant_image_raises():
    cube = HsiCube(width=2, height=2, bands=3, reflectance=np.full((3, 4), 0.4))
    with pytest.raises(RankDeficiencyError):
        extract_endmembers(cube, 2)


def test_rank_deficient_image_raises():
    # all pixels on a 1-D segment cannot span two directions beyond it
    base = np.linspace(0.2, 0.6, 4)
    direction = np.full(4, 0.05)
    cols = [base + k * direction for k in range(6)]
    cube = _cube_from_columns(cols, width=3, height=2)
    with pytest.raises(RankDeficiencyError):
        extract_endmembers(cube, 3)


def test_pixel_permutation_equivariance():
    rng = np.random.default_rng(3)
    refl = rng.uniform(0.1, 0.9, size=(6, 15))
    cube = HsiCube(width=5, height=3, bands=6, reflectance=refl)
    lib = extract_endmembers(cube, 3)
    perm = rng.permutation(15)
    cube_p = HsiCube(width=5, height=3, bands=6, reflectance=refl[:, perm])
    lib_p = extract_endmembers(cube_p, 3)
    np.testing.assert_allclose(np.sort(lib.means, axis=1), np.sort(lib_p.means, axis=1))


def test_projection_features_shape():
    rng = np.random.default_rng(4)
    refl = rng.uniform(0.1, 0.9, size=(6, 15))
    cube = HsiCube(width=5, height=3, bands=6, reflectance=refl)
    lib = extract_endmembers(cube, 3)
    feats = projection_features(cube, lib)
    assert feats.shape[1] == 15
    assert 1 <= feats.shape[0] <= 3
