import numpy as np
import pytest

from gncmix.data import (
    EndmemberLibrary,
    HsiCube,
    ResultBundle,
    load_cube,
    load_library,
    load_results,
    save_cube,
    save_library,
    save_results,
)
from gncmix.errors import DataFormatError


def _cube(rng, w=3, h=2, L=4):
    return HsiCube(width=w, height=h, bands=L, reflectance=rng.random((L, w * h)))


def test_constant_csv_cube(tmp_path):
    path = str(tmp_path / "cube.csv")
    cube = HsiCube(width=2, height=2, bands=3, reflectance=np.full((3, 4), 0.5))
    save_cube(cube, path, format="csv")
    loaded = load_cube(path, format="csv")
    assert loaded.n_pixels == 4 and loaded.bands == 3
    np.testing.assert_array_equal(loaded.reflectance, 0.5)


def test_payload_length_mismatch(tmp_path):
    path = str(tmp_path / "cube.raw")
    cube = HsiCube(width=2, height=1, bands=2, reflectance=np.full((2, 2), 0.25))
    save_cube(cube, path, format="raw-f64")
    blob = open(path, "rb").read()
    bad = blob.replace(b'"bands": 2', b'"bands": 3').replace(b'"bands":2', b'"bands":3')
    open(path, "wb").write(bad)
    with pytest.raises(DataFormatError, match="payload"):
        load_cube(path, format="raw-f64")


def test_malformed_header(tmp_path):
    path = str(tmp_path / "cube.csv")
    path2 = str(tmp_path / "cube.raw")
    open(path, "w").write("not,a,header\n1,2,3\n")
    with pytest.raises(DataFormatError, match="header"):
        load_cube(path, format="csv")
    open(path2, "wb").write(b"not json\n" + b"\x00" * 16)
    with pytest.raises(DataFormatError, match="header"):
        load_cube(path2, format="raw-f64")


def test_nan_rejected(tmp_path):
    refl = np.full((2, 2), 0.5)
    refl[0, 0] = np.nan
    with pytest.raises(DataFormatError, match="NaN"):
        HsiCube(width=2, height=1, bands=2, reflectance=refl)


def test_raw_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(11)
    cube = _cube(rng)
    path = str(tmp_path / "cube.raw")
    save_cube(cube, path, format="raw-f64")
    loaded = load_cube(path, format="raw-f64")
    assert np.array_equal(loaded.reflectance, cube.reflectance)  # bit identical


def test_csv_round_trip_exact(tmp_path):
    rng = np.random.default_rng(12)
    cube = _cube(rng, w=4, h=3, L=5)
    path = str(tmp_path / "cube.csv")
    save_cube(cube, path, format="csv")
    loaded = load_cube(path, format="csv")
    # 17 significant digits round-trip float64 exactly
    assert np.array_equal(loaded.reflectance, cube.reflectance)


def _bundle(rng, R=2, N=1, L=3, K=2):
    a = rng.dirichlet(np.ones(R), size=N).T
    return ResultBundle(
        abundances=a,
        labels=rng.integers(1, K + 1, size=N),
        noise_var=rng.random(N) * 1e-6,
        endmember_means=rng.uniform(0.1, 0.9, size=(L, R)),
        endmember_vars=rng.random((R, L)) * 1e-4,
        dirichlet=rng.random((R, K)) + 0.5,
        meta={"seed": 0},
    )


def test_single_pixel_bundle(tmp_path):
    rng = np.random.default_rng(13)
    bundle = _bundle(rng)
    out = str(tmp_path / "res")
    save_results(bundle, out)
    lines = open(f"{out}/abundances.csv").read().strip().splitlines()
    assert lines[0] == "a_1,a_2"
    assert len(lines) == 2  # header + one pixel
    vals = [float(v) for v in lines[1].split(",")]
    assert abs(sum(vals) - 1.0) < 1e-9


def test_label_zero_rejected(tmp_path):
    rng = np.random.default_rng(14)
    bundle = _bundle(rng)
    with pytest.raises(DataFormatError, match="labels"):
        ResultBundle(
            abundances=bundle.abundances,
            labels=np.zeros_like(bundle.labels),
            noise_var=bundle.noise_var,
            endmember_means=bundle.endmember_means,
            endmember_vars=bundle.endmember_vars,
            dirichlet=bundle.dirichlet,
        )


def test_results_round_trip(tmp_path):
    rng = np.random.default_rng(15)
    bundle = _bundle(rng, R=3, N=6, L=4, K=2)
    out = str(tmp_path / "res")
    save_results(bundle, out)
    loaded = load_results(out)
    np.testing.assert_allclose(
        loaded.endmember_means, bundle.endmember_means, rtol=1e-15, atol=0
    )
    np.testing.assert_allclose(loaded.abundances, bundle.abundances, rtol=1e-15, atol=0)
    np.testing.assert_array_equal(loaded.labels, bundle.labels)


def test_library_round_trip(tmp_path):
    rng = np.random.default_rng(16)
    lib = EndmemberLibrary(
        names=["a", "b"],
        means=rng.uniform(0.1, 0.9, size=(5, 2)),
        variances=rng.random((2, 5)) * 1e-4,
    )
    path = str(tmp_path / "lib.json")
    save_library(lib, path)
    loaded = load_library(path)
    np.testing.assert_array_equal(loaded.means, lib.means)
    np.testing.assert_array_equal(loaded.variances, lib.variances)
    assert list(loaded.names) == ["a", "b"]


def test_library_bounds_enforced():
    with pytest.raises(DataFormatError):
        EndmemberLibrary(names=["a"], means=np.array([[0.5], [1.0]]))
