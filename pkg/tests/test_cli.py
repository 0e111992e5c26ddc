import os
import time

import numpy as np
import pytest

from gncmix.cli import main
from gncmix.data import HsiCube, save_cube

GEN_CFG = """
[scene]
width = 6
height = 5
K = 2
R = 2
L = 8
beta = 1.0
potts_sweeps = 50
cap = 0.9
seed = 77

[dirichlet]
class_1 = 4, 1
class_2 = 1, 4

[noise]
kind = constant
psi2 = 1e-6

[endmembers]
source = synthetic
variances = yes
"""

UNMIX_CFG = """
[sampler]
iters = 30
burn_in = 15
seed = 5
progress_every = 0

[hyper]
K = 2
R = 2
beta = 1.0
"""

RESULT_FILES = [
    "abundances.csv",
    "labels.csv",
    "noise_var.csv",
    "endmember_means.csv",
    "endmember_vars.csv",
    "dirichlet.csv",
    "meta.json",
    "config.resolved",
    os.path.join("traces", "trace.csv"),
]


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return str(path)


@pytest.fixture
def scene_dir(tmp_path):
    cfg = _write(tmp_path / "scene.cfg", GEN_CFG)
    out = str(tmp_path / "scene")
    assert main(["generate", "--config", cfg, "--out", out]) == 0
    return out


def test_generate_outputs_and_determinism(tmp_path, scene_dir):
    for name in ["cube.raw", "library.json", "truth.json", "config.resolved"]:
        assert os.path.exists(os.path.join(scene_dir, name))
    assert os.path.exists(os.path.join(scene_dir, "truth", "abundances.csv"))
    cfg = _write(tmp_path / "scene2.cfg", GEN_CFG)
    out2 = str(tmp_path / "scene2")
    assert main(["generate", "--config", cfg, "--out", out2]) == 0
    blob1 = open(os.path.join(scene_dir, "cube.raw"), "rb").read()
    blob2 = open(os.path.join(out2, "cube.raw"), "rb").read()
    assert blob1 == blob2
    t1 = open(os.path.join(scene_dir, "truth", "abundances.csv")).read()
    t2 = open(os.path.join(out2, "truth", "abundances.csv")).read()
    assert t1 == t2


def test_generate_missing_key_exit_code(tmp_path, capsys):
    bad = GEN_CFG.replace("K = 2\n", "")
    cfg = _write(tmp_path / "bad.cfg", bad)
    assert main(["generate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "scene.K" in capsys.readouterr().err


def test_unmix_smoke_four_pixels(tmp_path):
    rng = np.random.default_rng(3)
    cube = HsiCube(width=2, height=2, bands=6, reflectance=rng.uniform(0.2, 0.8, (6, 4)))
    cube_path = str(tmp_path / "tiny.csv")
    save_cube(cube, cube_path, format="csv")
    cfg = _write(tmp_path / "u.cfg", UNMIX_CFG.replace("K = 2", "K = 1"))
    out = str(tmp_path / "out")
    start = time.time()
    code = main(
        ["unmix", cube_path, "--config", cfg, "--out", out, "--iters", "10", "--burn-in", "5"]
    )
    assert code == 0
    assert time.time() - start < 5.0
    for name in RESULT_FILES:
        assert os.path.exists(os.path.join(out, name)), name


def test_unmix_deterministic_and_fix_noise(scene_dir, tmp_path):
    cfg = _write(tmp_path / "u.cfg", UNMIX_CFG)
    cube = os.path.join(scene_dir, "cube.raw")
    out1, out2, out3 = (str(tmp_path / d) for d in ("u1", "u2", "u3"))
    assert main(["unmix", cube, "--config", cfg, "--out", out1]) == 0
    assert main(["unmix", cube, "--config", cfg, "--out", out2]) == 0
    a1 = open(os.path.join(out1, "abundances.csv")).read()
    a2 = open(os.path.join(out2, "abundances.csv")).read()
    assert a1 == a2
    assert main(["unmix", cube, "--config", cfg, "--out", out3, "--fix-noise-zero"]) == 0
    noise = np.loadtxt(os.path.join(out3, "noise_var.csv"), skiprows=1)
    np.testing.assert_array_equal(noise, 0.0)


def test_unmix_missing_cube_exit_code(tmp_path):
    cfg = _write(tmp_path / "u.cfg", UNMIX_CFG)
    code = main(
        ["unmix", str(tmp_path / "nope.raw"), "--config", cfg, "--out", str(tmp_path / "o")]
    )
    assert code == 4


def test_evaluate_truth_against_itself(scene_dir, capsys):
    truth = os.path.join(scene_dir, "truth")
    assert main(["evaluate", truth, truth]) == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    names = lines[0].split(",")
    values = dict(zip(names, (float(v) for v in lines[1].split(","))))
    assert values["aRMSE_A"] == 0.0
    assert values["aRMSE_M"] == 0.0
    assert values["RE"] == 0.0
    assert values["aSAM_M"] < 1e-6
    assert values["class_accuracy"] == 1.0
    assert values["dirichlet_max_rel_err"] == 0.0


def test_evaluate_end_to_end(scene_dir, tmp_path, capsys):
    cfg = _write(tmp_path / "u.cfg", UNMIX_CFG)
    cube = os.path.join(scene_dir, "cube.raw")
    out = str(tmp_path / "est")
    assert main(["unmix", cube, "--config", cfg, "--out", out]) == 0
    assert main(["evaluate", os.path.join(scene_dir, "truth"), out]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("aRMSE_A,")
    values = [float(v) for v in lines[1].split(",")]
    assert all(np.isfinite(values))


def test_evaluate_dimension_mismatch(scene_dir, tmp_path, capsys):
    # build an estimate with a different R by unmixing with 3 endmembers
    cfg = _write(tmp_path / "u.cfg", UNMIX_CFG)
    cube = os.path.join(scene_dir, "cube.raw")
    out = str(tmp_path / "est3")
    assert (
        main(
            ["unmix", cube, "--config", cfg, "--out", out, "--r-endmembers", "3",
             "--iters", "12", "--burn-in", "6"]
        )
        == 0
    )
    assert main(["evaluate", os.path.join(scene_dir, "truth"), out]) == 2
    assert "mismatch" in capsys.readouterr().err
